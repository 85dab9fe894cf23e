//! Defines a two-task suite inline, with its own oracles, and runs it. The
//! scripted answer for the second task shrinks the font, so its oracle
//! reports a failure the model did not notice.
//!
//!     cargo run --example custom_suite

use std::sync::Arc;

use actagent::bench::{run_benchmark, BenchOptions, Suite};
use actagent::llm::{ScriptTable, ScriptedProvider};
use serde_json::json;

const SUITE: &str = r#"
name = "demo"

[[task]]
id = "quiet"
instruction = "Make it quiet"
fixture = "default"
oracle = 'player.volume < initial.player.volume && player.volume >= 0'

[[task]]
id = "font"
instruction = "Use a bigger font"
fixture = "multi-tab"
oracle = 'active_document.font_size > initial.active_document.font_size'
"#;

fn main() {
    let suite = Suite::parse(SUITE).unwrap();
    let step = |code: &str| json!({"thinking": "direct edit", "action_code": format!("js:{code}"), "final_step": true});
    let table: ScriptTable = serde_json::from_value(json!({"entries": [
        {"instruction": "quiet", "response": step("app.player.volume = 0.1")},
        {"instruction": "font", "response": step("app.editor.fontSize = app.editor.fontSize - 1")},
    ]}))
    .unwrap();
    let report = run_benchmark(&suite, Arc::new(ScriptedProvider::new(table)), &BenchOptions::default());
    print!("{}", report.render_table());
}
