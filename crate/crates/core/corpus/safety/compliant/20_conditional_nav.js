app.ui.currentRoute === "home" ? app.ui.navigate("editor") : null;
