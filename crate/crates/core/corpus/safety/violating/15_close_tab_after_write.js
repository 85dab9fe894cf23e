app.player.volume = 0.7;
app.editor.closeTab(app.editor.activeTab);
