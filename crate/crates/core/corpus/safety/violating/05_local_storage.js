localStorage.setItem("volume", String(app.player.volume));
