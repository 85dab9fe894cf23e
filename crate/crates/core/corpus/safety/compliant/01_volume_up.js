app.player.volume = Math.min(1, app.player.volume + 0.1);
