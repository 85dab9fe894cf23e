app.player.previous();
