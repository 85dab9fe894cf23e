app.editor.activeDocument.paragraphs.length;
