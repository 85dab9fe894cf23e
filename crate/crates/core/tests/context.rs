use std::collections::BTreeSet;

use actagent::context::{
    bridge_symbols, build_index, render_symbols, shipped_index, tokenize, IndexError, SymbolDoc, SymbolKind,
    BRIDGE_SYMBOLS, DEFAULT_K, MAX_SNIPPET_LINES,
};
use actagent::host::surface;
use proptest::prelude::*;

fn doc(path: &str, text: &str, edges: &[&str]) -> SymbolDoc {
    SymbolDoc {
        path: path.into(),
        kind: SymbolKind::BridgeEntry,
        doc: text.into(),
        edges: edges.iter().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn symbols_asset_is_in_sync_with_the_surface() {
    let generated = render_symbols(&bridge_symbols());
    if std::env::var_os("ACTAGENT_BLESS").is_some() {
        std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/bridge_symbols.json"), &generated).unwrap();
        return;
    }
    assert_eq!(BRIDGE_SYMBOLS, generated, "rerun with ACTAGENT_BLESS=1");
}

#[test]
fn tokenizer_splits_identifiers_and_drops_stop_words() {
    let t = tokenize("app.editor.closeOtherTabs of the active_tab2");
    let expect: BTreeSet<String> =
        ["editor", "close", "other", "tab", "active", "2"].iter().map(|s| s.to_string()).collect();
    assert_eq!(t, expect);
}

#[test]
fn index_covers_the_whole_surface() {
    let idx = shipped_index();
    let bridge = idx.symbols().filter(|s| s.kind == SymbolKind::BridgeEntry).count();
    assert_eq!(bridge, surface().len());
    for s in idx.symbols() {
        for e in &s.edges {
            assert!(idx.get(e).is_some(), "{} -> {e}", s.path);
        }
    }
}

#[test]
fn duplicate_and_dangling_paths_are_rejected() {
    assert_eq!(
        build_index(&[doc("a", "x", &[]), doc("a", "y", &[])]).unwrap_err(),
        IndexError::DuplicatePath("a".into())
    );
    assert!(matches!(build_index(&[doc("a", "x", &["b"])]), Err(IndexError::UnknownEdge { .. })));
}

#[test]
fn empty_index_retrieves_nothing() {
    let idx = build_index(&[]).unwrap();
    assert!(idx.is_empty());
    assert!(idx.retrieve("anything", 3).is_empty());
}

#[test]
fn volume_instruction_ranks_volume_first() {
    let paths = shipped_index().retrieve_paths("Increase the volume slightly", DEFAULT_K);
    assert_eq!(paths[0], "app.player.volume");
}

/// Overlap scores computed by hand for "Increase the volume slightly":
/// only symbols whose text contains "volume" (or "increase"/"slightly")
/// can score.
#[test]
fn volume_scores_match_a_direct_count() {
    let idx = shipped_index();
    let q = tokenize("Increase the volume slightly");
    assert_eq!(q, ["increase", "slightly", "volume"].iter().map(|s| s.to_string()).collect());
    let top = idx.get("app.player.volume").unwrap();
    let best = idx.symbols().map(|s| s.tokens.intersection(&q).count()).max().unwrap();
    assert_eq!(top.tokens.intersection(&q).count(), best);
    let bridge_with_volume: Vec<&str> = idx
        .symbols()
        .filter(|s| s.kind == SymbolKind::BridgeEntry && s.tokens.contains("volume"))
        .map(|s| s.path.as_str())
        .collect();
    assert_eq!(bridge_with_volume, vec!["app.player.volume"]);
}

#[test]
fn close_other_tabs_pulls_in_tabs_by_edge() {
    let paths = shipped_index().retrieve_paths("Close all other tabs", DEFAULT_K);
    let pos = paths.iter().position(|p| p == "app.editor.closeOtherTabs").unwrap();
    assert!(pos < DEFAULT_K);
    assert!(paths.contains(&"app.editor.tabs".to_string()));
}

#[test]
fn no_overlap_falls_back_to_best_connected() {
    let idx = build_index(&[doc("a", "alpha", &["b", "c"]), doc("b", "beta", &["c"]), doc("c", "gamma", &[]), doc("d", "delta", &[])])
        .unwrap();
    assert_eq!(idx.retrieve_paths("zzz", 2), vec!["a", "b"]);
    assert_eq!(idx.retrieve_paths("zzz", 3), vec!["a", "b", "c"]);
}

#[test]
fn snippets_are_bounded() {
    let long = (0..100).map(|i| format!("line {i}")).collect::<Vec<_>>().join("\n");
    let idx = build_index(&[doc("x", &long, &[])]).unwrap();
    let s = &idx.retrieve("line", 1)[0];
    assert_eq!(s.text.lines().count(), MAX_SNIPPET_LINES);
}

const WORDS: [&str; 8] = ["volume", "tab", "song", "font", "history", "paragraph", "route", "search"];

fn docs_strategy() -> impl Strategy<Value = Vec<SymbolDoc>> {
    proptest::collection::vec(proptest::collection::vec(proptest::sample::select(WORDS.to_vec()), 1..4), 1..10).prop_map(
        |bags| {
            let n = bags.len();
            bags.into_iter()
                .enumerate()
                .map(|(i, words)| {
                    let edges = if i + 1 < n { vec![format!("s{}", i + 1)] } else { vec![] };
                    SymbolDoc { path: format!("s{i}"), kind: SymbolKind::BridgeEntry, doc: words.join(" "), edges }
                })
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn retrieve_is_deterministic_and_closed(docs in docs_strategy(), q in proptest::sample::select(WORDS.to_vec()), k in 1usize..6) {
        let idx = build_index(&docs).unwrap();
        let a = idx.retrieve_paths(q, k);
        prop_assert_eq!(&a, &idx.retrieve_paths(q, k));
        let unique: BTreeSet<&String> = a.iter().collect();
        prop_assert_eq!(unique.len(), a.len());
        for p in &a {
            prop_assert!(idx.get(p).is_some());
        }
    }

    /// An unrelated symbol never reorders what was returned before.
    #[test]
    fn unrelated_symbol_keeps_relative_order(docs in docs_strategy(), q in proptest::sample::select(WORDS.to_vec()), k in 1usize..6) {
        let before = build_index(&docs).unwrap().retrieve_paths(q, k);
        let mut more = docs.clone();
        more.push(doc("zz-unrelated", "quux", &[]));
        let after = build_index(&more).unwrap().retrieve_paths(q, k);
        let filtered: Vec<&String> = after.iter().filter(|p| before.contains(p)).collect();
        let expected: Vec<&String> = before.iter().filter(|p| after.contains(p)).collect();
        prop_assert_eq!(filtered, expected);
    }
}
