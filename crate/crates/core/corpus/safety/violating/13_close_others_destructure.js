const { editor } = app;
editor.closeOtherTabs();
