app.editor.openTab(null, app.editor.activeDocument.paragraphs.slice(0, 3));
