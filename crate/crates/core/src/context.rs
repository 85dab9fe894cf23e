//! Keyword index over the bridge documentation, with one-hop expansion
//! along hand-authored edges, used to pick prompt context for an
//! instruction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::host::{surface, ROUTES};

pub const DEFAULT_K: usize = 6;
pub const MAX_SNIPPET_LINES: usize = 40;

/// The shipped symbol docs, generated from the bridge surface.
pub const BRIDGE_SYMBOLS: &str = include_str!("../assets/bridge_symbols.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolKind {
    BridgeEntry,
    Type,
    Route,
    Example,
}

/// Input record for [`build_index`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolDoc {
    pub path: String,
    pub kind: SymbolKind,
    pub doc: String,
    #[serde(default)]
    pub edges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedSymbol {
    pub path: String,
    pub kind: SymbolKind,
    pub doc: String,
    pub tokens: BTreeSet<String>,
    pub edges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate symbol path '{0}'")]
    DuplicatePath(String),
    #[error("symbol '{from}' has an edge to unknown symbol '{to}'")]
    UnknownEdge { from: String, to: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Index {
    symbols: BTreeMap<String, IndexedSymbol>,
    degree: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub path: String,
    pub kind: SymbolKind,
    pub text: String,
}

const STOP_WORDS: [&str; 38] = [
    "a", "an", "the", "of", "to", "and", "or", "in", "on", "for", "by", "with", "is", "are", "be", "it", "its",
    "this", "that", "my", "me", "i", "as", "at", "from", "all", "please", "can", "you", "your", "into", "so",
    "then", "than", "do", "does", "app", "s",
];

fn stem(w: &str) -> String {
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
        w[..w.len() - 1].to_string()
    } else {
        w.to_string()
    }
}

/// Lowercased keyword bag: identifiers split on case changes, digits and
/// underscores, stop words dropped, plural `s` trimmed.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut word = String::new();
    let mut flush = |word: &mut String| {
        if !word.is_empty() {
            let w = word.to_lowercase();
            if !STOP_WORDS.contains(&w.as_str()) {
                out.insert(stem(&w));
            }
            word.clear();
        }
    };
    let mut prev: Option<char> = None;
    for c in text.chars() {
        if c.is_alphanumeric() {
            let boundary = match prev {
                Some(p) => (p.is_lowercase() && c.is_uppercase()) || (p.is_alphabetic() != c.is_alphabetic()),
                None => false,
            };
            if boundary {
                flush(&mut word);
            }
            word.push(c);
        } else {
            flush(&mut word);
        }
        prev = Some(c);
    }
    flush(&mut word);
    out
}

pub fn build_index(docs: &[SymbolDoc]) -> Result<Index, IndexError> {
    let mut symbols = BTreeMap::new();
    for d in docs {
        let mut tokens = tokenize(&d.path);
        tokens.extend(tokenize(&d.doc));
        let sym = IndexedSymbol { path: d.path.clone(), kind: d.kind, doc: d.doc.clone(), tokens, edges: d.edges.clone() };
        if symbols.insert(d.path.clone(), sym).is_some() {
            return Err(IndexError::DuplicatePath(d.path.clone()));
        }
    }
    let mut degree: BTreeMap<String, usize> = symbols.keys().map(|k| (k.clone(), 0)).collect();
    for s in symbols.values() {
        for e in &s.edges {
            if !symbols.contains_key(e) {
                return Err(IndexError::UnknownEdge { from: s.path.clone(), to: e.clone() });
            }
            *degree.get_mut(&s.path).unwrap() += 1;
            *degree.get_mut(e).unwrap() += 1;
        }
    }
    Ok(Index { symbols, degree })
}

impl Index {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, path: &str) -> Option<&IndexedSymbol> {
        self.symbols.get(path)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &IndexedSymbol> {
        self.symbols.values()
    }

    /// Paths most relevant to `query`: the top `k` by keyword overlap, then
    /// their edge neighbours. Falls back to the `k` best-connected symbols
    /// when nothing overlaps.
    pub fn retrieve_paths(&self, query: &str, k: usize) -> Vec<String> {
        let k = k.max(1);
        let q = tokenize(query);
        let mut scored: Vec<(usize, &str)> = self
            .symbols
            .values()
            .map(|s| (s.tokens.intersection(&q).count(), s.path.as_str()))
            .filter(|(n, _)| *n > 0)
            .collect();
        if scored.is_empty() {
            let mut by_degree: Vec<(usize, &str)> =
                self.degree.iter().map(|(p, d)| (*d, p.as_str())).collect();
            by_degree.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
            return by_degree.into_iter().take(k).map(|(_, p)| p.to_string()).collect();
        }
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        let seeds: Vec<&str> = scored.into_iter().take(k).map(|(_, p)| p).collect();
        let mut out: Vec<String> = seeds.iter().map(|p| p.to_string()).collect();
        let mut seen: BTreeSet<&str> = seeds.iter().copied().collect();
        for p in &seeds {
            let mut next: Vec<&str> = self.symbols[*p].edges.iter().map(String::as_str).collect();
            next.sort_unstable();
            for n in next {
                if seen.insert(n) {
                    out.push(n.to_string());
                }
            }
        }
        out
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Vec<Snippet> {
        self.retrieve_paths(query, k).into_iter().map(|p| self.snippet(&p)).collect()
    }

    fn snippet(&self, path: &str) -> Snippet {
        let s = &self.symbols[path];
        let text = format!("{}\n{}", s.path, s.doc);
        let text = text.lines().take(MAX_SNIPPET_LINES).collect::<Vec<_>>().join("\n");
        Snippet { path: s.path.clone(), kind: s.kind, text }
    }
}

fn route_doc(route: &str) -> (&'static str, &'static [&'static str]) {
    match route {
        "home" => (
            "Start page: the play queue and the tabs For You, Discover, Charts and Radio.",
            &["app.ui.navigate", "app.player.queue"],
        ),
        "library" => (
            "Music library page. Tabs in order: Playlists, Albums, Artists, MVs, Favorites, Play History; below them the list of all songs.",
            &["app.ui.navigate", "app.ui.find"],
        ),
        "library/favorites" => (
            "Library page with the Favorites tab selected: lists the favorite songs.",
            &["app.ui.navigate", "app.library.favorites"],
        ),
        "library/history" => (
            "Library page with the Play History tab selected: lists the listening history, most recent first.",
            &["app.ui.navigate", "app.library.history"],
        ),
        "search?q=<text>" => (
            "Search results page for a song search.",
            &["app.library.search", "app.ui.navigate"],
        ),
        "editor" => (
            "Markdown editor page: one tab per open file, the active document's paragraphs below.",
            &["app.ui.navigate", "app.editor.tabs"],
        ),
        _ => ("", &[]),
    }
}

/// Symbol docs derived from the bridge surface, the routes and a few
/// worked examples. `assets/bridge_symbols.json` is this, serialized.
pub fn bridge_symbols() -> Vec<SymbolDoc> {
    let mut out: Vec<SymbolDoc> = surface()
        .iter()
        .map(|e| SymbolDoc {
            path: e.path.to_string(),
            kind: SymbolKind::BridgeEntry,
            doc: format!("{} [{}]\n{}", e.signature, e.access.as_str(), e.doc),
            edges: e.edges.iter().map(|s| s.to_string()).collect(),
        })
        .collect();
    for r in ROUTES.iter().copied().chain(["search?q=<text>"]) {
        let (doc, edges) = route_doc(r);
        out.push(SymbolDoc {
            path: format!("route:{r}"),
            kind: SymbolKind::Route,
            doc: doc.to_string(),
            edges: edges.iter().map(|s| s.to_string()).collect(),
        });
    }
    let types: [(&str, &str, &[&str]); 3] = [
        ("type:Song", "A song (track): {id, title, artist, duration} with duration in seconds.", &["app.player.currentTrack", "app.library.search"]),
        ("type:Tab", "An editor tab: {id, title, documentId, active}. The title is the file name.", &["app.editor.tabs", "app.editor.openTab"]),
        ("type:UiHandle", "A handle returned by app.ui.find: {id, kind, label, route, click()}.", &["app.ui.find", "app.ui.click"]),
    ];
    for (path, doc, edges) in types {
        out.push(SymbolDoc {
            path: path.into(),
            kind: SymbolKind::Type,
            doc: doc.into(),
            edges: edges.iter().map(|s| s.to_string()).collect(),
        });
    }
    let examples: [(&str, &str, &[&str]); 3] = [
        (
            "example:open-tab-by-label",
            "Show a tab of a page by clicking it:\nawait app.ui.navigate('library');\nconst tab = app.ui.find('Play History')[0];\ntab.click();",
            &["app.ui.find", "app.ui.click", "route:library"],
        ),
        (
            "example:edit-paragraph",
            "Edit the active document, e.g. make a paragraph bold:\nconst p = app.editor.activeDocument.paragraphs;\np[1] = '**' + p[1] + '**';",
            &["app.editor.activeDocument.paragraphs"],
        ),
        (
            "example:adjust-volume",
            "Change the volume relative to its current value:\napp.player.volume = Math.min(1, app.player.volume + 0.1);",
            &["app.player.volume"],
        ),
    ];
    for (path, doc, edges) in examples {
        out.push(SymbolDoc {
            path: path.into(),
            kind: SymbolKind::Example,
            doc: doc.into(),
            edges: edges.iter().map(|s| s.to_string()).collect(),
        });
    }
    out
}

pub fn render_symbols(docs: &[SymbolDoc]) -> String {
    let mut s = serde_json::to_string_pretty(docs).expect("symbols serialize");
    s.push('\n');
    s
}

/// Index over the shipped symbol docs.
pub fn shipped_index() -> Index {
    let docs: Vec<SymbolDoc> = serde_json::from_str(BRIDGE_SYMBOLS).expect("shipped symbols parse");
    build_index(&docs).expect("shipped symbols index")
}
