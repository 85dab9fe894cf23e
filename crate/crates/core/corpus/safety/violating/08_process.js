app.player.volume = 0.2;
process.exit(0);
