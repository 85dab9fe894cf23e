//! Starts the service on a free port, submits a task, follows its event
//! stream to the end and prints the final state.
//!
//!     cargo run --example service_session

use std::io::{BufRead, BufReader};
use std::sync::Arc;

use actagent::llm::{builtin_script, ScriptedProvider};
use actagent::service::{serve_on, ServiceConfig, ServiceState};
use serde_json::{json, Value};

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let provider = Arc::new(ScriptedProvider::new(builtin_script("table2").unwrap()));
    let state = ServiceState::new(ServiceConfig::default(), provider).unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    rt.spawn(serve_on(state, listener));

    let http = reqwest::blocking::Client::new();
    let created: Value = http
        .post(format!("{base}/sessions"))
        .json(&json!({"instruction": "Increase the volume slightly"}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = created["id"].as_str().unwrap();
    println!("POST /sessions -> {created}");

    let events = http.get(format!("{base}/sessions/{id}/events")).send().unwrap();
    for line in BufReader::new(events).lines().map_while(Result::ok) {
        if let Some(data) = line.strip_prefix("data:") {
            let e: Value = serde_json::from_str(data.trim()).unwrap();
            println!("event {:>2} {:<16} {}", e["seq"], e["kind"].as_str().unwrap(), e["payload"]);
        }
    }
    let state: Value = http.get(format!("{base}/state")).send().unwrap().json().unwrap();
    println!("volume now {}", state["state"]["player"]["volume"]);
}
