app.editor.openTab("scratch", []);
