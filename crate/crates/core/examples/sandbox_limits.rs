//! Runs code in the sandbox: a normal edit, an error that discards its
//! writes, and two runaway loops stopped by the limits.
//!
//!     cargo run --example sandbox_limits

use actagent::host::init_fixture;
use actagent::safety::Guard;
use actagent::sandbox::{execute, ActionCode, ResourceLimits};

fn main() {
    let state = init_fixture("default").unwrap();
    let limits = ResourceLimits { wall_timeout_ms: 500, ..Default::default() };
    for src in [
        "app.editor.fontSize += 2; console.log('font', app.editor.fontSize)",
        "app.player.volume = 1; app.player.missing.call()",
        "while (true) {}",
        "let i = 0; while (i < 1e8) { i++ }",
    ] {
        let (after, r) = execute(&ActionCode::js(src), &state, &limits, Guard::permissive()).unwrap();
        println!("{src}");
        println!("  status {} in {} ms, console {:?}", r.status.as_str(), r.duration_ms, r.console);
        if let Some(e) = &r.error {
            println!("  error: {}", e.text);
        }
        println!("  changed: {:?}", r.state_diff.paths().collect::<Vec<_>>());
        assert!(r.is_ok() || after == state);
    }
}
