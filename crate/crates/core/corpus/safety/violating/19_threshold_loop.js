for (const r of ["library", "editor"]) {
  app.ui.navigate(r);
}
app.player.next();
app.player.volume = 1;
