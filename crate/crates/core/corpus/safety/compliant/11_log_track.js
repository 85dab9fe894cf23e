console.log(app.player.currentTrack.title);
