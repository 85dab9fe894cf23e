//! Records model answers into a cassette directory, then replays the run
//! without the model.
//!
//!     cargo run --example cassette

use std::sync::Arc;

use actagent::bench::{run_benchmark, BenchOptions, Suite};
use actagent::llm::{builtin_script, Cassette, CassetteProvider, ScriptedProvider};

fn main() {
    let dir = std::env::temp_dir().join(format!("actagent-cassette-{}", std::process::id()));
    let suite = Suite::table2();
    let opts = BenchOptions { provider_name: "mixed".into(), ..Default::default() };
    let live = Arc::new(ScriptedProvider::new(builtin_script("mixed").unwrap()));

    let recorded = run_benchmark(&suite, Arc::new(CassetteProvider::record(Cassette::new(&dir), live)), &opts);
    println!("recorded {} answers into {}", Cassette::new(&dir).len(), dir.display());
    let replayed = run_benchmark(&suite, Arc::new(CassetteProvider::replay(Cassette::new(&dir))), &opts);
    println!("recorded {} / replayed {}; same verdicts: {}", recorded.rate, replayed.rate, recorded.verdicts() == replayed.verdicts());
    std::fs::remove_dir_all(dir).ok();
}
