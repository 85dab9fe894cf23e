app.ui.navigate("library");
app.ui.find("tab")[5].click();
app.ui.currentRoute;
