//! Shows which bridge docs the index picks for a few instructions.
//!
//!     cargo run --example context_retrieval -- "make the second paragraph bold"

use actagent::context::{shipped_index, DEFAULT_K};

fn main() {
    let index = shipped_index();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let queries = if args.is_empty() {
        vec!["Show my listening history".to_string(), "Increase the font size".to_string()]
    } else {
        vec![args.join(" ")]
    };
    for q in queries {
        println!("{q}");
        for s in index.retrieve(&q, DEFAULT_K) {
            println!("  {:<40} {}", s.path, s.text.lines().nth(1).unwrap_or_default());
        }
    }
}
