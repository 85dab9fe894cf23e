const p = app.editor.activeDocument.paragraphs;
p.slice(0, 3).join("\n");
