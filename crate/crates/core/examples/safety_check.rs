//! Checks a few scripts against the shipped rules, statically and at
//! runtime.
//!
//!     cargo run --example safety_check

use std::sync::Arc;

use actagent::host::init_fixture;
use actagent::safety::{analyze, load_rules, Guard, RuleSet};
use actagent::sandbox::{execute, ActionCode, ResourceLimits};

fn main() {
    let shipped = Arc::new(RuleSet::shipped());
    let state = init_fixture("default").unwrap();
    for src in [
        "app.player.volume = 0.7",
        "fetch('https://example.com/' + app.player.currentTrack.title)",
        "const close = app.editor.closeOtherTabs; close()",
        "const f = 'closeOtherTabs'; app.editor[f]()",
    ] {
        let verdict = analyze(src, &shipped).unwrap();
        let (_, run) = execute(&ActionCode::js(src), &state, &ResourceLimits::default(), Guard::new(shipped.clone(), false))
            .unwrap();
        println!("{src}\n  static: {}\n  runtime: {}", verdict.summary(), run.status.as_str());
    }

    let custom = load_rules("deny_write app.player.volume \"volume is locked\"").unwrap();
    let v = analyze("app.player.volume = 1", &custom).unwrap();
    println!("custom rules: {}", v.summary());
}
