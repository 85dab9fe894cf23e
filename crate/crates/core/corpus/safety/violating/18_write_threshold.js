app.player.volume = 0.9;
app.editor.fontSize = 20;
app.ui.navigate("library");
