const p = app.musicPlayer || app.player;
p.volume = 0.1;
p.next();
app.editor.openTab("x", []);
