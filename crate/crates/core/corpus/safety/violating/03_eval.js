eval("app.player.volume = 1");
