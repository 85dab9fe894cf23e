setTimeout(() => app.player.next(), 0);
