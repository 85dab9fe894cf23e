//! The reference application: a music player plus a markdown editor, held as
//! a plain value and manipulated only through the bridge surface.

mod bridge;
mod diff;
mod fixtures;
mod ui;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bridge::{
    dispatch, namespaces, surface, Access, BridgeCall, CallKind, DispatchError, SurfaceEntry,
    ROOT,
};
pub(crate) use bridge::{apply, children};
pub use diff::{apply_diff, diff, DiffEntry, StateDiff};
pub use fixtures::{
    fixture_file, init_fixture, FixtureError, FixtureFile, FIXTURE_FORMAT, FIXTURE_NAMES,
};
pub use ui::{find_nodes, ui_tree, NodeKind, UiNode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub title: String,
    pub artist: String,
    /// Seconds.
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub track_id: String,
    /// Logical clock value when the track started playing.
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub volume: f64,
    pub queue: Vec<String>,
    pub current_index: Option<usize>,
    pub favorites: BTreeSet<String>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub paragraphs: Vec<String>,
    pub font_size: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tab {
    pub id: String,
    pub document_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorState {
    pub tabs: Vec<Tab>,
    pub active_tab: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostState {
    pub player: PlayerState,
    pub library: BTreeMap<String, Track>,
    pub editor: EditorState,
    pub documents: BTreeMap<String, Document>,
    pub current_route: String,
    pub logical_clock: u64,
}

pub const MIN_FONT: i64 = 6;
pub const MAX_FONT: i64 = 72;

/// The closed set of fixed routes. Search routes are `search?q=<text>`.
pub const ROUTES: [&str; 5] = ["home", "library", "library/favorites", "library/history", "editor"];

pub fn is_route(route: &str) -> bool {
    ROUTES.contains(&route) || route.starts_with("search?q=")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid host state: {0}")]
pub struct InvariantViolation(pub String);

fn bad<T>(msg: impl Into<String>) -> Result<T, InvariantViolation> {
    Err(InvariantViolation(msg.into()))
}

impl HostState {
    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let p = &self.player;
        if !(0.0..=1.0).contains(&p.volume) {
            return bad(format!("volume {} outside [0,1]", p.volume));
        }
        if let Some(i) = p.current_index {
            if i >= p.queue.len() {
                return bad(format!("current_index {i} outside queue"));
            }
        }
        for (id, t) in &self.library {
            if id != &t.id {
                return bad(format!("library key {id} holds track {}", t.id));
            }
            if t.duration == 0 {
                return bad(format!("track {id} has zero duration"));
            }
        }
        let known = |id: &String| self.library.contains_key(id);
        if let Some(id) = p.queue.iter().chain(p.favorites.iter()).find(|id| !known(id)) {
            return bad(format!("unknown track {id}"));
        }
        if let Some(h) = p.history.iter().find(|h| !known(&h.track_id)) {
            return bad(format!("history references unknown track {}", h.track_id));
        }
        let ed = &self.editor;
        if ed.tabs.is_empty() {
            return bad("no tabs");
        }
        let mut seen = BTreeSet::new();
        for t in &ed.tabs {
            if !seen.insert(&t.id) {
                return bad(format!("duplicate tab id {}", t.id));
            }
            if !self.documents.contains_key(&t.document_id) {
                return bad(format!("tab {} references missing document", t.id));
            }
        }
        if !seen.contains(&ed.active_tab) {
            return bad(format!("active tab {} does not exist", ed.active_tab));
        }
        for (id, d) in &self.documents {
            if id != &d.id {
                return bad(format!("document key {id} holds {}", d.id));
            }
            if !(MIN_FONT..=MAX_FONT).contains(&d.font_size) {
                return bad(format!("font size {} outside [6,72]", d.font_size));
            }
        }
        if !is_route(&self.current_route) {
            return bad(format!("unknown route {}", self.current_route));
        }
        Ok(())
    }

    /// Canonical serialized form. Field order is fixed by the types and maps
    /// are sorted, so equal states always serialize identically.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("host state serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<HostState, InvariantViolation> {
        let s: HostState =
            serde_json::from_value(v.clone()).map_err(|e| InvariantViolation(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Hex sha256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("host state serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn active_tab(&self) -> &Tab {
        self.editor
            .tabs
            .iter()
            .find(|t| t.id == self.editor.active_tab)
            .expect("active tab exists")
    }

    pub fn active_document(&self) -> &Document {
        &self.documents[&self.active_tab().document_id]
    }

    pub(crate) fn active_document_mut(&mut self) -> &mut Document {
        let id = self.active_tab().document_id.clone();
        self.documents.get_mut(&id).expect("active document exists")
    }

    pub fn current_track(&self) -> Option<&Track> {
        let i = self.player.current_index?;
        self.library.get(self.player.queue.get(i)?)
    }
}
