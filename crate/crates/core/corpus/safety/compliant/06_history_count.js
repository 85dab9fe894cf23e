app.library.history().length;
