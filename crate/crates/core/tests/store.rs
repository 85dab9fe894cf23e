use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Arc;
use std::thread;

use actagent::host::{init_fixture, HostState, StateDiff};
use actagent::safety::Guard;
use actagent::sandbox::{execute, ActionCode, ResourceLimits};
use actagent::store::{AuditFilter, AuditRecord, Store, StoreError};
use proptest::prelude::*;
use serde_json::json;

fn record(session: &str, i: u32, snap: u64, status: &str) -> AuditRecord {
    AuditRecord {
        session_id: session.into(),
        iteration_index: i,
        code_hash: Some(format!("h{i}")),
        verdict_decision: Some("allow".into()),
        result_status: status.into(),
        snapshot_id: snap,
        state_diff: StateDiff::default(),
    }
}

fn mutate(state: &HostState, src: &str) -> HostState {
    execute(&ActionCode::js(src), state, &ResourceLimits::default(), Guard::permissive()).unwrap().0
}

#[test]
fn snapshot_restore_is_identity() {
    let store = Store::in_memory();
    let s = init_fixture("multi-tab").unwrap();
    let id = store.take_snapshot(&s, "s1", 0).unwrap();
    assert_eq!(store.snapshot(id).unwrap().state, s);
}

#[test]
fn two_snapshots_of_one_state_get_distinct_ids() {
    let store = Store::in_memory();
    let s = init_fixture("default").unwrap();
    let a = store.take_snapshot(&s, "s1", 0).unwrap();
    let b = store.take_snapshot(&s, "s1", 1).unwrap();
    assert!(b > a);
    assert_eq!(store.snapshot(a).unwrap().state, store.snapshot(b).unwrap().state);
}

#[test]
fn rollback_reverts_a_volume_change_and_logs_it() {
    let store = Store::in_memory();
    let s0 = init_fixture("default").unwrap();
    let id = store.take_snapshot(&s0, "s1", 0).unwrap();
    let s1 = mutate(&s0, "app.player.volume = 0.9");
    assert_eq!(s1.player.volume, 0.9);
    let back = store.rollback(id, &s1).unwrap();
    assert_eq!(back.player.volume, 0.5);
    assert_eq!(back, s0);
    let log = store.query_audit(&AuditFilter::default());
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].result_status, "rolled_back");
    assert_eq!(log[0].snapshot_id, id);
    assert!(log[0].state_diff.paths().any(|p| p == "player/volume"));
}

#[test]
fn rollback_to_an_older_iteration() {
    let store = Store::in_memory();
    let mut s = init_fixture("default").unwrap();
    let mut pre = Vec::new();
    for (i, src) in ["app.player.next()", "app.editor.fontSize = 20", "app.ui.navigate('library')", "app.player.volume = 0"]
        .iter()
        .enumerate()
    {
        pre.push((store.take_snapshot(&s, "s1", i as u32).unwrap(), s.clone()));
        s = mutate(&s, src);
    }
    let (id, expected) = &pre[1];
    assert_eq!(&store.rollback(*id, &s).unwrap(), expected);
    assert_eq!(
        serde_json::to_string(&store.snapshot(*id).unwrap().state).unwrap(),
        serde_json::to_string(expected).unwrap()
    );
}

#[test]
fn unknown_snapshot_is_an_error() {
    let store = Store::in_memory();
    let s = init_fixture("default").unwrap();
    assert!(matches!(store.rollback(999, &s), Err(StoreError::UnknownSnapshot(999))));
    assert!(store.query_audit(&AuditFilter::default()).is_empty());
}

#[test]
fn audit_is_ordered_and_filterable() {
    let store = Store::in_memory();
    store.append_audit(record("a", 0, 1, "ok")).unwrap();
    store.append_audit(record("b", 0, 2, "ok")).unwrap();
    store.append_audit(record("a", 1, 3, "runtime_error")).unwrap();
    let all = store.query_audit(&AuditFilter::default());
    assert_eq!(all.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2, 3]);
    let a = store.query_audit(&AuditFilter::session("a"));
    assert_eq!(a.iter().map(|e| e.iteration_index).collect::<Vec<_>>(), vec![0, 1]);
    let range = store.query_audit(&AuditFilter { seq_from: Some(2), seq_to: Some(3), ..Default::default() });
    assert_eq!(range.len(), 1);
    assert_eq!(range[0].session_id, "b");
}

#[test]
fn audit_line_field_order_is_stable() {
    let store = Store::in_memory();
    let e = store.append_audit(record("a", 0, 1, "ok")).unwrap();
    let line = serde_json::to_string(&e).unwrap();
    let keys: Vec<String> = serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&line)
        .unwrap()
        .keys()
        .cloned()
        .collect();
    assert_eq!(
        keys,
        [
            "seq", "timestamp_ms", "session_id", "iteration_index", "code_hash", "verdict_decision",
            "result_status", "snapshot_id", "state_diff"
        ]
    );
}

#[test]
fn everything_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let s = init_fixture("default").unwrap();
    let (snap, entries) = {
        let store = Store::open(dir.path()).unwrap();
        let snap = store.take_snapshot(&s, "a", 0).unwrap();
        store.append_audit(record("a", 0, snap, "ok")).unwrap();
        store.append_audit(record("a", 1, snap, "ok")).unwrap();
        store.save_host(&s).unwrap();
        store.save_session("a", &json!({"id": "a", "status": "running"})).unwrap();
        store.append_event("a", &json!({"kind": "x"})).unwrap();
        (snap, store.query_audit(&AuditFilter::default()))
    };
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.query_audit(&AuditFilter::default()), entries);
    assert_eq!(store.snapshot(snap).unwrap().state, s);
    assert_eq!(store.load_host(), Some(s.clone()));
    assert_eq!(store.sessions()["a"]["status"], "running");
    assert_eq!(store.events("a"), vec![json!({"kind": "x"})]);
    let next = store.take_snapshot(&s, "b", 0).unwrap();
    assert!(next > snap);
    assert_eq!(store.append_audit(record("b", 0, next, "ok")).unwrap().seq, 3);
}

#[test]
fn torn_final_audit_line_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = Store::open(dir.path()).unwrap();
        store.append_audit(record("a", 0, 1, "ok")).unwrap();
    }
    let mut f = OpenOptions::new().append(true).open(dir.path().join("audit.log")).unwrap();
    f.write_all(b"{\"seq\":2,\"timest").unwrap();
    drop(f);
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.query_audit(&AuditFilter::default()).len(), 1);
}

#[test]
fn gc_keeps_the_newest_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let s = init_fixture("default").unwrap();
    let ids: Vec<u64> = (0..5).map(|i| store.take_snapshot(&s, "a", i).unwrap()).collect();
    assert_eq!(store.gc(2).unwrap(), 3);
    assert_eq!(store.snapshot_ids().unwrap(), ids[3..].to_vec());
    assert!(matches!(store.snapshot(ids[0]), Err(StoreError::UnknownSnapshot(_))));
    let mem = Store::in_memory();
    mem.take_snapshot(&s, "a", 0).unwrap();
    assert_eq!(mem.gc(5).unwrap(), 0);
}

#[test]
fn readers_see_a_consistent_prefix() {
    let store = Arc::new(Store::in_memory());
    let writer = {
        let store = store.clone();
        thread::spawn(move || {
            for i in 0..500 {
                store.append_audit(record("w", i, 1, "ok")).unwrap();
            }
        })
    };
    for _ in 0..200 {
        let seen = store.query_audit(&AuditFilter::default());
        for (i, e) in seen.iter().enumerate() {
            assert_eq!(e.seq, i as u64 + 1);
        }
    }
    writer.join().unwrap();
    assert_eq!(store.query_audit(&AuditFilter::default()).len(), 500);
}

const MUTATIONS: [&str; 10] = [
    "app.player.volume = Math.random()",
    "app.player.next()",
    "app.player.previous()",
    "app.editor.fontSize += 3",
    "app.editor.openTab('n', ['a', 'b'])",
    "app.editor.activeDocument.paragraphs.push('p')",
    "app.ui.navigate('library/favorites')",
    "app.library.search('queen')",
    "app.editor.closeOtherTabs()",
    "app.ui.find('tab')[0].click()",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rollback_identity_over_random_sequences(
        fixture in proptest::sample::select(vec!["default", "multi-tab", "empty-editor"]),
        ops in proptest::collection::vec(0..MUTATIONS.len(), 1..8),
        pick in any::<proptest::sample::Index>(),
    ) {
        let store = Store::in_memory();
        let mut s = init_fixture(fixture).unwrap();
        let mut pre = Vec::new();
        for (i, &op) in ops.iter().enumerate() {
            pre.push((store.take_snapshot(&s, "p", i as u32).unwrap(), s.clone()));
            s = mutate(&s, MUTATIONS[op]);
        }
        let (id, expected) = &pre[pick.index(pre.len())];
        prop_assert_eq!(&store.rollback(*id, &s).unwrap(), expected);
    }
}
