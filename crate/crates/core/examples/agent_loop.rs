//! Runs the volume task with the shipped scripted model and prints each
//! iteration: the first two attempts fail and their errors feed the next.
//!
//!     cargo run --example agent_loop

use std::sync::Arc;

use actagent::agent::{Agent, AgentConfig};
use actagent::host::init_fixture;
use actagent::llm::{builtin_script, ScriptedProvider};
use actagent::store::Store;

fn main() {
    let provider = Arc::new(ScriptedProvider::new(builtin_script("listing1").unwrap()));
    let agent = Agent::new(AgentConfig::default(), provider, Arc::new(Store::in_memory()));
    let mut state = init_fixture("default").unwrap();
    let mut session = agent.start("Increase the volume slightly", "default", &state).unwrap();
    agent.run(&mut session, &mut state).unwrap();

    for it in &session.iterations {
        let code = it.response.as_ref().map(|r| r.action_code()).unwrap_or_default();
        println!("--- iteration {} ({})", it.index, it.status_label());
        println!("{code}");
        if let Some(f) = it.feedback_text() {
            println!(">>> {f}");
        }
    }
    println!("session {}: volume is now {}", session.status, state.player.volume);
}
