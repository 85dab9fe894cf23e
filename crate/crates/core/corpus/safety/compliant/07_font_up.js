app.editor.fontSize = app.editor.fontSize + 2;
