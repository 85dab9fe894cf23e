const close = app.editor.closeOtherTabs;
close();
