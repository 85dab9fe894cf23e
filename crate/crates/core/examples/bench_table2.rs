//! Runs the ten-task suite with a shipped script and prints the table.
//!
//!     cargo run --example bench_table2 -- mixed

use std::sync::Arc;

use actagent::bench::{run_benchmark, BenchOptions, Suite};
use actagent::llm::{builtin_script, ScriptedProvider};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "table2".into());
    let provider = Arc::new(ScriptedProvider::new(builtin_script(&name).expect("unknown script")));
    let opts = BenchOptions { provider_name: name, parallelism: 4, ..Default::default() };
    let report = run_benchmark(&Suite::table2(), provider, &opts);
    print!("{}", report.render_table());
}
