use actscript::HostValue;
use serde_json::{json, Value as Json};

use super::ui::{find_nodes, search_ids, ui_tree, UiNode};
use super::{is_route, Document, HistoryEntry, HostState, Tab, Track, MAX_FONT, MIN_FONT};

/// Name of the single global through which action code reaches the host.
pub const ROOT: &str = "app";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    ReadWrite,
    Method { mutating: bool },
    /// Output sink provided by the interpreter itself (`console.log`).
    Sink,
}

impl Access {
    pub fn as_str(self) -> &'static str {
        match self {
            Access::Read => "read",
            Access::ReadWrite => "read-write",
            Access::Method { mutating: true } => "method (mutating)",
            Access::Method { mutating: false } => "method",
            Access::Sink => "sink",
        }
    }
}

/// One entry of the bridge surface. This table is the single source of
/// truth for dispatch metadata, safety classification and the symbol index.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceEntry {
    pub path: &'static str,
    pub access: Access,
    pub signature: &'static str,
    pub doc: &'static str,
    pub edges: &'static [&'static str],
}

const NAMESPACES: [&str; 6] = [
    "app",
    "app.player",
    "app.library",
    "app.editor",
    "app.editor.activeDocument",
    "app.ui",
];

const SURFACE: [SurfaceEntry; 20] = [
    SurfaceEntry {
        path: "app.player.volume",
        access: Access::ReadWrite,
        signature: "number",
        doc: "Playback volume as a fraction from 0 (silent) to 1 (max). Assigning a number sets it; values outside the range are clamped. Use it to make playback louder or quieter.",
        edges: &["app.player.currentTrack"],
    },
    SurfaceEntry {
        path: "app.player.next",
        access: Access::Method { mutating: true },
        signature: "next() -> Track | null",
        doc: "Skips to and plays the next song in the play queue (wraps to the start). The started song is appended to the listening history.",
        edges: &["app.player.queue", "app.player.currentTrack", "app.player.previous"],
    },
    SurfaceEntry {
        path: "app.player.previous",
        access: Access::Method { mutating: true },
        signature: "previous() -> Track | null",
        doc: "Goes back to the previous song in the play queue (wraps to the end) and plays it.",
        edges: &["app.player.queue", "app.player.currentTrack", "app.player.next"],
    },
    SurfaceEntry {
        path: "app.player.currentTrack",
        access: Access::Read,
        signature: "Track | null",
        doc: "The song currently playing: {id, title, artist, duration}, or null when nothing is queued.",
        edges: &["app.player.queue"],
    },
    SurfaceEntry {
        path: "app.player.queue",
        access: Access::Read,
        signature: "Track[]",
        doc: "The play queue (up next), in order, as a list of song objects.",
        edges: &["app.player.currentTrack", "app.player.next"],
    },
    SurfaceEntry {
        path: "app.library.favorites",
        access: Access::Method { mutating: false },
        signature: "favorites() -> Track[]",
        doc: "Returns the songs the user marked as favorite (liked songs). Only returns data; to show them, navigate to the 'library/favorites' route.",
        edges: &["app.ui.navigate", "app.library.history"],
    },
    SurfaceEntry {
        path: "app.library.history",
        access: Access::Method { mutating: false },
        signature: "history() -> {track, at}[]",
        doc: "Returns the listening history (recently played songs), oldest first. Only returns data; the history view is the 'Play History' tab of the library page.",
        edges: &["app.ui.find", "app.ui.navigate", "app.library.favorites"],
    },
    SurfaceEntry {
        path: "app.library.search",
        access: Access::Method { mutating: true },
        signature: "search(q: string) -> Track[]",
        doc: "Searches songs whose title or artist contains the text (case-insensitive), shows the results page 'search?q=<text>' and returns the matches.",
        edges: &["app.ui.currentRoute"],
    },
    SurfaceEntry {
        path: "app.editor.tabs",
        access: Access::Read,
        signature: "{id, title, documentId, active}[]",
        doc: "The open editor tabs in order.",
        edges: &["app.editor.activeTab"],
    },
    SurfaceEntry {
        path: "app.editor.activeTab",
        access: Access::Read,
        signature: "string",
        doc: "Id of the tab currently shown in the editor.",
        edges: &["app.editor.tabs", "app.editor.activeDocument.paragraphs"],
    },
    SurfaceEntry {
        path: "app.editor.openTab",
        access: Access::Method { mutating: true },
        signature: "openTab(title?: string, paragraphs?: string[]) -> string",
        doc: "Opens a new editor tab holding a new document with the given title and paragraphs (default: untitled, empty), makes it the active tab and returns its id. Also creates a new file.",
        edges: &["app.editor.tabs", "app.editor.activeTab", "app.editor.activeDocument.paragraphs"],
    },
    SurfaceEntry {
        path: "app.editor.closeTab",
        access: Access::Method { mutating: true },
        signature: "closeTab(id: string)",
        doc: "Closes the editor tab with the given id. Closing the last remaining tab is an error.",
        edges: &["app.editor.tabs", "app.editor.activeTab"],
    },
    SurfaceEntry {
        path: "app.editor.closeOtherTabs",
        access: Access::Method { mutating: true },
        signature: "closeOtherTabs() -> number",
        doc: "Closes every editor tab except the active one and returns how many were closed.",
        edges: &["app.editor.tabs", "app.editor.activeTab", "app.editor.closeTab"],
    },
    SurfaceEntry {
        path: "app.editor.fontSize",
        access: Access::ReadWrite,
        signature: "integer",
        doc: "Font size in points of the active document. Assigning rounds to an integer and clamps to 6..72. Make text bigger or smaller.",
        edges: &["app.editor.activeTab"],
    },
    SurfaceEntry {
        path: "app.editor.activeDocument.paragraphs",
        access: Access::ReadWrite,
        signature: "string[]",
        doc: "Paragraphs (markdown text blocks) of the file in the active tab, first paragraph at index 0. Assign the array or an element to edit content; markdown such as **bold** is kept as text.",
        edges: &["app.editor.activeTab", "app.editor.openTab"],
    },
    SurfaceEntry {
        path: "app.ui.navigate",
        access: Access::Method { mutating: true },
        signature: "navigate(route: string) -> Promise",
        doc: "Shows a page. Routes: 'home', 'library', 'library/favorites', 'library/history', 'search?q=<text>', 'editor'. Returns a promise that resolves once the page is shown.",
        edges: &["app.ui.currentRoute", "app.ui.find"],
    },
    SurfaceEntry {
        path: "app.ui.currentRoute",
        access: Access::Read,
        signature: "string",
        doc: "Route of the page currently shown.",
        edges: &["app.ui.navigate"],
    },
    SurfaceEntry {
        path: "app.ui.find",
        access: Access::Method { mutating: false },
        signature: "find(labelOrKind: string) -> {id, kind, label, route, click()}[]",
        doc: "Finds on-screen UI elements of the current page by kind ('view', 'tab', 'button', 'list', 'item') or by label text. Each handle has a click() method.",
        edges: &["app.ui.click", "app.ui.navigate"],
    },
    SurfaceEntry {
        path: "app.ui.click",
        access: Access::Method { mutating: true },
        signature: "click(nodeId: string)",
        doc: "Clicks the UI element with the given id. Elements with a route open that page; editor tabs become active.",
        edges: &["app.ui.find"],
    },
    SurfaceEntry {
        path: "console.log",
        access: Access::Sink,
        signature: "console.log(...values)",
        doc: "Prints values to the output returned after the code runs (console.error marks errors).",
        edges: &[],
    },
];

pub fn surface() -> &'static [SurfaceEntry] {
    &SURFACE
}

pub fn namespaces() -> &'static [&'static str] {
    &NAMESPACES
}

/// Surface entry exactly at `path`.
pub(crate) fn entry(path: &str) -> Option<&'static SurfaceEntry> {
    SURFACE.iter().find(|e| e.path == path)
}

pub(crate) fn is_namespace(path: &str) -> bool {
    NAMESPACES.contains(&path)
}

/// Whether invoking `path` mutates state.
pub(crate) fn is_mutating_method(path: &str) -> bool {
    matches!(entry(path).map(|e| e.access), Some(Access::Method { mutating: true }))
}

/// Direct child names of a namespace.
pub(crate) fn children(ns: &str) -> Vec<String> {
    let prefix = format!("{ns}.");
    let mut out: Vec<String> = NAMESPACES
        .iter()
        .copied()
        .chain(SURFACE.iter().map(|e| e.path))
        .filter_map(|p| p.strip_prefix(&prefix))
        .map(|rest| rest.split('.').next().unwrap().to_string())
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallKind {
    Get,
    Set(Json),
    Invoke(Vec<Json>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeCall {
    pub path: String,
    pub kind: CallKind,
}

impl BridgeCall {
    pub fn get(path: impl Into<String>) -> Self {
        BridgeCall { path: path.into(), kind: CallKind::Get }
    }
    pub fn set(path: impl Into<String>, v: Json) -> Self {
        BridgeCall { path: path.into(), kind: CallKind::Set(v) }
    }
    pub fn invoke(path: impl Into<String>, args: Vec<Json>) -> Self {
        BridgeCall { path: path.into(), kind: CallKind::Invoke(args) }
    }

    /// Writes and mutating invocations.
    pub fn is_mutating(&self) -> bool {
        match &self.kind {
            CallKind::Get => false,
            CallKind::Set(_) => true,
            CallKind::Invoke(_) => is_mutating_method(&self.path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DispatchError {
    #[error("{0} is not a function")]
    UnknownPath(String),
    #[error("{path} expects at least {expected} argument(s), got {got}")]
    Arity { path: String, expected: usize, got: usize },
    #[error("{0}")]
    Type(String),
    #[error("{0}")]
    Domain(String),
}

impl From<DispatchError> for actscript::HostError {
    fn from(e: DispatchError) -> Self {
        match e {
            DispatchError::Domain(m) => actscript::HostError::Domain(m),
            other => actscript::HostError::Type(other.to_string()),
        }
    }
}

/// Pure dispatch: returns the updated state and the call's value.
pub fn dispatch(state: &HostState, call: &BridgeCall) -> Result<(HostState, HostValue), DispatchError> {
    let mut next = state.clone();
    let v = apply(&mut next, call)?;
    Ok((next, v))
}

/// In-place dispatch. On error the state is left untouched.
pub(crate) fn apply(state: &mut HostState, call: &BridgeCall) -> Result<HostValue, DispatchError> {
    match &call.kind {
        CallKind::Get => Ok(read(state, &call.path)),
        CallKind::Set(v) => {
            write(state, &call.path, v)?;
            state.logical_clock += 1;
            Ok(HostValue::Json(read_json(state, &call.path)))
        }
        CallKind::Invoke(args) => {
            let out = invoke(state, &call.path, args)?;
            if is_mutating_method(&call.path) {
                state.logical_clock += 1;
            }
            Ok(out)
        }
    }
}

fn track_json(t: &Track) -> Json {
    json!({"id": t.id, "title": t.title, "artist": t.artist, "duration": t.duration})
}

fn tracks_json(state: &HostState, ids: impl IntoIterator<Item = impl AsRef<str>>) -> Json {
    Json::Array(
        ids.into_iter()
            .filter_map(|id| state.library.get(id.as_ref()).map(track_json))
            .collect(),
    )
}

fn read_json(state: &HostState, path: &str) -> Json {
    match read(state, path) {
        HostValue::Json(j) => j,
        _ => Json::Null,
    }
}

fn read(state: &HostState, path: &str) -> HostValue {
    if is_namespace(path) {
        return HostValue::Namespace(path.to_string());
    }
    let Some(e) = entry(path) else {
        return HostValue::Undefined;
    };
    if let Access::Method { .. } = e.access {
        return HostValue::Method { path: path.to_string(), bound: Vec::new() };
    }
    let j = match path {
        "app.player.volume" => json!(state.player.volume),
        "app.player.currentTrack" => state.current_track().map(track_json).unwrap_or(Json::Null),
        "app.player.queue" => tracks_json(state, &state.player.queue),
        "app.editor.tabs" => Json::Array(
            state
                .editor
                .tabs
                .iter()
                .map(|t| {
                    json!({
                        "id": t.id,
                        "title": state.documents[&t.document_id].title,
                        "documentId": t.document_id,
                        "active": t.id == state.editor.active_tab,
                    })
                })
                .collect(),
        ),
        "app.editor.activeTab" => json!(state.editor.active_tab),
        "app.editor.fontSize" => json!(state.active_document().font_size),
        "app.editor.activeDocument.paragraphs" => {
            return HostValue::BoundArray {
                path: path.to_string(),
                items: state.active_document().paragraphs.iter().map(|p| json!(p)).collect(),
            }
        }
        "app.ui.currentRoute" => json!(state.current_route),
        _ => return HostValue::Undefined,
    };
    HostValue::Json(j)
}

fn number_arg(path: &str, v: &Json) -> Result<f64, DispatchError> {
    match v.as_f64() {
        Some(n) if n.is_finite() => Ok(n),
        _ => Err(DispatchError::Type(format!("{path} must be a finite number, got {v}"))),
    }
}

fn string_list(what: &str, v: &Json) -> Result<Vec<String>, DispatchError> {
    let err = || DispatchError::Type(format!("{what} must be a list of strings"));
    v.as_array()
        .ok_or_else(err)?
        .iter()
        .map(|x| x.as_str().map(str::to_string).ok_or_else(err))
        .collect()
}

fn last_segment(path: &str) -> (&str, &str) {
    path.rsplit_once('.').unwrap_or(("", path))
}

fn write(state: &mut HostState, path: &str, v: &Json) -> Result<(), DispatchError> {
    match path {
        "app.player.volume" => {
            state.player.volume = number_arg(path, v)?.clamp(0.0, 1.0);
        }
        "app.editor.fontSize" => {
            let n = number_arg(path, v)?.round().clamp(MIN_FONT as f64, MAX_FONT as f64);
            state.active_document_mut().font_size = n as i64;
        }
        "app.editor.activeDocument.paragraphs" => {
            let paras = string_list("paragraphs", v)?;
            state.active_document_mut().paragraphs = paras;
        }
        _ => {
            let (parent, name) = last_segment(path);
            return Err(DispatchError::Type(if entry(path).is_some() || is_namespace(path) {
                format!("Cannot assign to read only property '{name}' of object '{parent}'")
            } else {
                format!("Cannot add property {name}, object is not extensible")
            }));
        }
    }
    Ok(())
}

fn arg_str<'a>(path: &str, args: &'a [Json], i: usize) -> Result<&'a str, DispatchError> {
    match args.get(i) {
        None | Some(Json::Null) => Err(DispatchError::Arity {
            path: path.to_string(),
            expected: i + 1,
            got: args.len().min(i),
        }),
        Some(Json::String(s)) => Ok(s),
        Some(other) => Err(DispatchError::Type(format!(
            "{path}: argument {} must be a string, got {other}",
            i + 1
        ))),
    }
}

fn play_at(state: &mut HostState, i: usize) -> HostValue {
    state.player.current_index = Some(i);
    let id = state.player.queue[i].clone();
    state.player.history.push(HistoryEntry { track_id: id.clone(), at: state.logical_clock + 1 });
    HostValue::Json(track_json(&state.library[&id]))
}

fn invoke(state: &mut HostState, path: &str, args: &[Json]) -> Result<HostValue, DispatchError> {
    let none = || HostValue::Undefined;
    Ok(match path {
        "app.player.next" | "app.player.previous" => {
            let n = state.player.queue.len();
            if n == 0 {
                return Ok(HostValue::Json(Json::Null));
            }
            let i = match (state.player.current_index, path.ends_with("next")) {
                (None, _) => 0,
                (Some(i), true) => (i + 1) % n,
                (Some(i), false) => (i + n - 1) % n,
            };
            play_at(state, i)
        }
        "app.library.favorites" => HostValue::Json(tracks_json(state, &state.player.favorites)),
        "app.library.history" => HostValue::Json(Json::Array(
            state
                .player
                .history
                .iter()
                .filter_map(|h| {
                    let t = state.library.get(&h.track_id)?;
                    Some(json!({"track": track_json(t), "at": h.at}))
                })
                .collect(),
        )),
        "app.library.search" => {
            let q = arg_str(path, args, 0)?.to_string();
            let ids = search_ids(state, &q);
            state.current_route = format!("search?q={q}");
            HostValue::Json(tracks_json(state, ids))
        }
        "app.editor.openTab" => {
            let title = match args.first() {
                None | Some(Json::Null) => "Untitled".to_string(),
                Some(Json::String(s)) => s.clone(),
                Some(other) => {
                    return Err(DispatchError::Type(format!(
                        "{path}: title must be a string, got {other}"
                    )))
                }
            };
            let paragraphs = match args.get(1) {
                None | Some(Json::Null) => Vec::new(),
                Some(v) => string_list("paragraphs", v)?,
            };
            let n = next_suffix(state.editor.tabs.iter().map(|t| t.id.as_str()), "tab-")
                .max(next_suffix(state.documents.keys().map(String::as_str), "doc-"));
            let tab_id = format!("tab-{n}");
            let doc_id = format!("doc-{n}");
            let font_size = state.active_document().font_size;
            state.documents.insert(
                doc_id.clone(),
                Document { id: doc_id.clone(), title, paragraphs, font_size },
            );
            state.editor.tabs.push(Tab { id: tab_id.clone(), document_id: doc_id });
            state.editor.active_tab = tab_id.clone();
            HostValue::Json(json!(tab_id))
        }
        "app.editor.closeTab" => {
            let id = arg_str(path, args, 0)?.to_string();
            let Some(pos) = state.editor.tabs.iter().position(|t| t.id == id) else {
                return Err(DispatchError::Domain(format!("no tab with id '{id}'")));
            };
            if state.editor.tabs.len() == 1 {
                return Err(DispatchError::Domain("cannot close last tab".into()));
            }
            state.editor.tabs.remove(pos);
            if state.editor.active_tab == id {
                let j = pos.min(state.editor.tabs.len() - 1);
                state.editor.active_tab = state.editor.tabs[j].id.clone();
            }
            drop_orphans(state);
            none()
        }
        "app.editor.closeOtherTabs" => {
            let before = state.editor.tabs.len();
            let active = state.editor.active_tab.clone();
            state.editor.tabs.retain(|t| t.id == active);
            drop_orphans(state);
            HostValue::Json(json!(before - 1))
        }
        "app.ui.navigate" => {
            let raw = arg_str(path, args, 0)?;
            let route = raw.trim_matches('/');
            let route = if route.is_empty() { "home" } else { route };
            if !is_route(route) {
                return Err(DispatchError::Domain(format!("unknown route '{raw}'")));
            }
            state.current_route = route.to_string();
            HostValue::Resolved(Box::new(HostValue::Undefined))
        }
        "app.ui.find" => {
            let q = arg_str(path, args, 0)?;
            let tree = ui_tree(state);
            HostValue::List(find_nodes(&tree, q).into_iter().map(handle).collect())
        }
        "app.ui.click" => {
            let id = arg_str(path, args, 0)?;
            let tree = ui_tree(state);
            let Some(node) = tree.find_id(id) else {
                return Err(DispatchError::Domain(format!("no UI element with id '{id}'")));
            };
            if let Some(r) = &node.route {
                state.current_route = r.clone();
            }
            if let Some(t) = &node.activates {
                state.editor.active_tab = t.clone();
            }
            none()
        }
        _ => return Err(DispatchError::UnknownPath(path.to_string())),
    })
}

fn handle(n: &UiNode) -> HostValue {
    HostValue::Object(vec![
        ("id".into(), HostValue::Json(json!(n.id))),
        ("kind".into(), HostValue::Json(json!(n.kind.as_str()))),
        ("label".into(), HostValue::Json(json!(n.label))),
        ("route".into(), HostValue::Json(json!(n.route))),
        (
            "click".into(),
            HostValue::Method { path: "app.ui.click".into(), bound: vec![json!(n.id)] },
        ),
    ])
}

fn next_suffix<'a>(ids: impl Iterator<Item = &'a str>, prefix: &str) -> u64 {
    ids.filter_map(|id| id.strip_prefix(prefix)?.parse::<u64>().ok()).max().unwrap_or(0) + 1
}

fn drop_orphans(state: &mut HostState) {
    let live: std::collections::BTreeSet<String> =
        state.editor.tabs.iter().map(|t| t.document_id.clone()).collect();
    state.documents.retain(|id, _| live.contains(id));
}
