use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    Document, EditorState, HistoryEntry, HostState, InvariantViolation, PlayerState, Tab, Track,
};

pub const FIXTURE_FORMAT: &str = "actagent-fixture/1";
pub const FIXTURE_NAMES: [&str; 3] = ["default", "empty-editor", "multi-tab"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixtureError {
    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),
    #[error("fixture file: {0}")]
    Format(String),
    #[error(transparent)]
    Invalid(#[from] InvariantViolation),
}

/// On-disk fixture: a format tag, the fixture name and the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub format: String,
    pub name: String,
    pub state: HostState,
}

impl FixtureFile {
    /// Pretty JSON with a trailing newline, as stored under `fixtures/`.
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fixture serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<FixtureFile, FixtureError> {
        let f: FixtureFile =
            serde_json::from_str(text).map_err(|e| FixtureError::Format(e.to_string()))?;
        if f.format != FIXTURE_FORMAT {
            return Err(FixtureError::Format(format!("unsupported format '{}'", f.format)));
        }
        f.state.validate()?;
        Ok(f)
    }
}

const TRACKS: [(&str, &str, u32); 12] = [
    ("Hotel California", "Eagles", 391),
    ("Bohemian Rhapsody", "Queen", 354),
    ("Imagine", "John Lennon", 183),
    ("Billie Jean", "Michael Jackson", 294),
    ("Smells Like Teen Spirit", "Nirvana", 301),
    ("Take Five", "The Dave Brubeck Quartet", 324),
    ("Wonderwall", "Oasis", 258),
    ("Hey Jude", "The Beatles", 431),
    ("Clair de Lune", "Claude Debussy", 302),
    ("Purple Rain", "Prince", 521),
    ("So What", "Miles Davis", 562),
    ("Dancing Queen", "ABBA", 231),
];

const PARAGRAPHS: [&str; 5] = [
    "# Weekly notes",
    "The release went out on Tuesday without incident.",
    "Next week we start on the search rewrite.",
    "Open question: should playlists sync across devices?",
    "Remember to update the changelog.",
];

fn track_id(i: usize) -> String {
    format!("t{:02}", i + 1)
}

fn document(id: &str, title: &str, paragraphs: &[&str]) -> Document {
    Document {
        id: id.into(),
        title: title.into(),
        paragraphs: paragraphs.iter().map(|p| p.to_string()).collect(),
        font_size: 14,
    }
}

fn default_state() -> HostState {
    let library: BTreeMap<String, Track> = TRACKS
        .iter()
        .enumerate()
        .map(|(i, (title, artist, duration))| {
            let id = track_id(i);
            let t = Track {
                id: id.clone(),
                title: title.to_string(),
                artist: artist.to_string(),
                duration: *duration,
            };
            (id, t)
        })
        .collect();
    let queue = [1, 3, 6, 8, 10, 0].iter().map(|&i| track_id(i)).collect();
    let favorites: BTreeSet<String> = [0, 2, 7].iter().map(|&i| track_id(i)).collect();
    let history = [4, 1, 9, 5, 11]
        .iter()
        .enumerate()
        .map(|(n, &i)| HistoryEntry {
            track_id: track_id(i),
            at: n as u64 + 1,
        })
        .collect();
    let doc = document("doc-1", "notes.md", &PARAGRAPHS);
    HostState {
        player: PlayerState {
            volume: 0.5,
            queue,
            current_index: Some(0),
            favorites,
            history,
        },
        library,
        editor: EditorState {
            tabs: vec![Tab {
                id: "tab-1".into(),
                document_id: "doc-1".into(),
            }],
            active_tab: "tab-1".into(),
        },
        documents: BTreeMap::from([("doc-1".to_string(), doc)]),
        current_route: "home".into(),
        logical_clock: 5,
    }
}

/// Builds a shipped fixture. Deterministic: the same name always yields the
/// same state.
pub fn init_fixture(name: &str) -> Result<HostState, FixtureError> {
    let state = match name {
        "default" => default_state(),
        "empty-editor" => {
            let mut s = default_state();
            s.documents.get_mut("doc-1").unwrap().paragraphs.clear();
            s
        }
        "multi-tab" => {
            let mut s = default_state();
            let extra = [
                ("doc-2", "todo.md", &["- buy strings", "- book rehearsal room"][..]),
                ("doc-3", "lyrics.md", &["Verse one", "Chorus", "Verse two"][..]),
            ];
            for (i, (id, title, paras)) in extra.into_iter().enumerate() {
                s.documents.insert(id.into(), document(id, title, paras));
                s.editor.tabs.push(Tab {
                    id: format!("tab-{}", i + 2),
                    document_id: id.into(),
                });
            }
            s.editor.active_tab = "tab-2".into();
            s.current_route = "editor".into();
            s
        }
        other => return Err(FixtureError::UnknownFixture(other.to_string())),
    };
    debug_assert!(state.validate().is_ok());
    Ok(state)
}

/// The fixture wrapped in its file envelope.
pub fn fixture_file(name: &str) -> Result<FixtureFile, FixtureError> {
    Ok(FixtureFile {
        format: FIXTURE_FORMAT.into(),
        name: name.into(),
        state: init_fixture(name)?,
    })
}
