app.library.favorites().map(t => t.title);
