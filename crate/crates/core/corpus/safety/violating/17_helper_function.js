function shut(e) {
  e.closeOtherTabs();
}
shut(app.editor);
