const tabs = app.ui.find("tab");
tabs.length;
