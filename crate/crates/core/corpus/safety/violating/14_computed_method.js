const m = "closeOther" + "Tabs";
app.editor[m]();
