const x = new XMLHttpRequest();
x.open("GET", "https://example.com");
