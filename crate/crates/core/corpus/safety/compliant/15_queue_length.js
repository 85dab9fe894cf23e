const q = app.player.queue;
q.length;
