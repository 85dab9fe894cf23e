const get = fetch;
get("https://example.com");
