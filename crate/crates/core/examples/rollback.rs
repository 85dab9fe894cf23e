//! Snapshots a state, changes it, rolls back and prints the audit entry
//! the rollback leaves.
//!
//!     cargo run --example rollback

use actagent::host::init_fixture;
use actagent::safety::Guard;
use actagent::sandbox::{execute, ActionCode, ResourceLimits};
use actagent::store::{AuditFilter, Store};

fn main() {
    let dir = std::env::temp_dir().join(format!("actagent-rollback-{}", std::process::id()));
    let store = Store::open(&dir).unwrap();
    let before = init_fixture("multi-tab").unwrap();
    let snap = store.take_snapshot(&before, "demo", 0).unwrap();

    let src = "app.editor.closeOtherTabs(); app.player.volume = 0.1";
    let (after, _) = execute(&ActionCode::js(src), &before, &ResourceLimits::default(), Guard::permissive()).unwrap();
    println!("tabs {} -> {}, hash {} -> {}", before.editor.tabs.len(), after.editor.tabs.len(), &before.hash()[..12], &after.hash()[..12]);

    let restored = store.rollback(snap, &after).unwrap();
    println!("restored hash {} (identical: {})", &restored.hash()[..12], restored == before);
    for e in store.query_audit(&AuditFilter::default()) {
        println!("{}", serde_json::to_string(&e).unwrap());
    }
    std::fs::remove_dir_all(dir).ok();
}
