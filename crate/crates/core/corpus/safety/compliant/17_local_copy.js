let v = app.player.volume;
v = v * 2;
v;
