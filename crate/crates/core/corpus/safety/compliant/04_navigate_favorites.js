app.ui.navigate("library/favorites");
