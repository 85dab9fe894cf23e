app.editor.tabs.map(t => t.title);
