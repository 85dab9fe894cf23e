JSON.stringify(app.editor.tabs.map(t => t.id));
