use serde::{Deserialize, Serialize};

use super::HostState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    View,
    Tab,
    Button,
    List,
    Item,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::View => "view",
            NodeKind::Tab => "tab",
            NodeKind::Button => "button",
            NodeKind::List => "list",
            NodeKind::Item => "item",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub route: Option<String>,
    /// Editor tab activated when this node is clicked.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub activates: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<UiNode>,
}

impl UiNode {
    fn new(id: impl Into<String>, kind: NodeKind, label: impl Into<String>) -> Self {
        UiNode {
            id: id.into(),
            kind,
            label: label.into(),
            route: None,
            activates: None,
            children: Vec::new(),
        }
    }

    fn routed(mut self, route: &str) -> Self {
        self.route = Some(route.into());
        self
    }

    fn with(mut self, children: Vec<UiNode>) -> Self {
        self.children = children;
        self
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&UiNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    pub fn find_id(&self, id: &str) -> Option<&UiNode> {
        self.walk().into_iter().find(|n| n.id == id)
    }
}

const HOME_TABS: [&str; 4] = ["For You", "Discover", "Charts", "Radio"];

const LIBRARY_TABS: [(&str, &str); 6] = [
    ("Playlists", "library"),
    ("Albums", "library"),
    ("Artists", "library"),
    ("MVs", "library"),
    ("Favorites", "library/favorites"),
    ("Play History", "library/history"),
];

fn track_item(state: &HostState, prefix: &str, n: usize, id: &str) -> UiNode {
    let label = match state.library.get(id) {
        Some(t) => format!("{} - {}", t.title, t.artist),
        None => id.to_string(),
    };
    UiNode::new(format!("{prefix}-item-{n}"), NodeKind::Item, label)
}

/// The view-model tree for the current route. Deterministic in `state`.
pub fn ui_tree(state: &HostState) -> UiNode {
    let nav = UiNode::new("nav", NodeKind::List, "Navigation").with(vec![
        UiNode::new("nav-home", NodeKind::Button, "Home").routed("home"),
        UiNode::new("nav-library", NodeKind::Button, "Library").routed("library"),
        UiNode::new("nav-editor", NodeKind::Button, "Editor").routed("editor"),
    ]);
    let route = state.current_route.as_str();
    let main = if route == "home" {
        let tabs = HOME_TABS
            .iter()
            .enumerate()
            .map(|(i, l)| UiNode::new(format!("home-tab-{i}"), NodeKind::Tab, *l).routed("home"))
            .collect();
        let queue = state
            .player
            .queue
            .iter()
            .enumerate()
            .map(|(i, id)| track_item(state, "queue", i, id))
            .collect();
        UiNode::new("home", NodeKind::View, "Home").with(vec![
            UiNode::new("home-tabs", NodeKind::List, "Tabs").with(tabs),
            UiNode::new("queue", NodeKind::List, "Up Next").with(queue),
        ])
    } else if route.starts_with("library") {
        let tabs = LIBRARY_TABS
            .iter()
            .enumerate()
            .map(|(i, (l, r))| UiNode::new(format!("library-tab-{i}"), NodeKind::Tab, *l).routed(r))
            .collect();
        let (label, ids): (&str, Vec<&String>) = match route {
            "library/favorites" => ("Favorite Songs", state.player.favorites.iter().collect()),
            "library/history" => (
                "Play History",
                state.player.history.iter().rev().map(|h| &h.track_id).collect(),
            ),
            _ => ("All Songs", state.library.keys().collect()),
        };
        let items = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| track_item(state, "library", i, id))
            .collect();
        UiNode::new("library", NodeKind::View, "Library").with(vec![
            UiNode::new("library-tabs", NodeKind::List, "Tabs").with(tabs),
            UiNode::new("library-list", NodeKind::List, label).with(items),
        ])
    } else if let Some(q) = route.strip_prefix("search?q=") {
        let items = search_ids(state, q)
            .into_iter()
            .enumerate()
            .map(|(i, id)| track_item(state, "search", i, &id))
            .collect();
        UiNode::new("search", NodeKind::View, format!("Results for {q}"))
            .with(vec![UiNode::new("search-list", NodeKind::List, "Results").with(items)])
    } else {
        let tabs = state
            .editor
            .tabs
            .iter()
            .map(|t| {
                let mut n = UiNode::new(
                    format!("editor-tab-{}", t.id),
                    NodeKind::Tab,
                    state.documents[&t.document_id].title.clone(),
                );
                n.activates = Some(t.id.clone());
                n
            })
            .collect();
        let paras = state
            .active_document()
            .paragraphs
            .iter()
            .enumerate()
            .map(|(i, p)| UiNode::new(format!("paragraph-{i}"), NodeKind::Item, p.clone()))
            .collect();
        UiNode::new("editor", NodeKind::View, "Editor").with(vec![
            UiNode::new("editor-tabs", NodeKind::List, "Tabs").with(tabs),
            UiNode::new("document", NodeKind::List, "Document").with(paras),
        ])
    };
    UiNode::new("root", NodeKind::View, "App").with(vec![nav, main])
}

/// Nodes of kind `query` when it names a kind, otherwise nodes whose label
/// contains it. Case-insensitive, in tree order.
pub fn find_nodes<'a>(tree: &'a UiNode, query: &str) -> Vec<&'a UiNode> {
    let q = query.trim().to_lowercase();
    let by_kind = ["view", "tab", "button", "list", "item"].contains(&q.as_str());
    tree.walk()
        .into_iter()
        .filter(|n| {
            if by_kind {
                n.kind.as_str() == q
            } else {
                !q.is_empty() && n.label.to_lowercase().contains(&q)
            }
        })
        .collect()
}

/// Track ids whose title or artist contains `q`, case-insensitively, in
/// library order.
pub(crate) fn search_ids(state: &HostState, q: &str) -> Vec<String> {
    let q = q.to_lowercase();
    state
        .library
        .values()
        .filter(|t| t.title.to_lowercase().contains(&q) || t.artist.to_lowercase().contains(&q))
        .map(|t| t.id.clone())
        .collect()
}
