app.editor.closeOtherTabs();
