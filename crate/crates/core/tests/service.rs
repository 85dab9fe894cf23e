use std::io::{BufRead, BufReader};
use std::sync::Arc;
use std::time::{Duration, Instant};

use actagent::host::init_fixture;
use actagent::llm::{ScriptTable, ScriptedProvider};
use actagent::service::{serve_on, Effect, ServiceConfig, ServiceState, ENDPOINTS};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

const LISTING1: &str = include_str!("../assets/scripts/listing1.json");
const LISTING2: &str = include_str!("../assets/scripts/listing2.json");

fn act(code: &str) -> Value {
    json!({"thinking": "t", "action_code": format!("js:{code}"), "final_step": true})
}

fn script() -> ScriptTable {
    let mut entries = Vec::new();
    for t in [LISTING1, LISTING2] {
        let v: Value = serde_json::from_str(t).unwrap();
        entries.extend(v["entries"].as_array().unwrap().iter().cloned());
    }
    let pass = act("console.log('VERIFY:PASS')");
    let fail = act("console.log('VERIFY:FAIL')");
    entries.extend([
        json!({"instruction": "close the other tabs", "phase": "verify", "response": pass}),
        json!({"instruction": "close the other tabs", "response": act("app.editor.closeOtherTabs()")}),
        json!({"instruction": "slowly", "phase": "verify", "response": pass}),
        json!({"instruction": "slowly", "delay_ms": 400, "response": act("app.player.volume = 0.3")}),
        json!({"instruction": "ask me", "phase": "verify", "response": fail}),
        json!({"instruction": "ask me", "response": act("app.player.next()")}),
    ]);
    serde_json::from_value(json!({ "entries": entries })).unwrap()
}

struct Server {
    base: String,
    state: Arc<ServiceState>,
    http: Client,
    _rt: tokio::runtime::Runtime,
}

fn server(cfg: ServiceConfig) -> Server {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let state = ServiceState::new(cfg, Arc::new(ScriptedProvider::new(script()))).unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    rt.spawn(serve_on(state.clone(), listener));
    Server { base, state, http: Client::builder().timeout(Duration::from_secs(20)).build().unwrap(), _rt: rt }
}

fn default_server() -> Server {
    server(ServiceConfig::default())
}

impl Server {
    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        let code = r.status();
        (code, r.json().unwrap_or(Value::Null))
    }

    fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().unwrap();
        let code = r.status();
        (code, r.json().unwrap_or(Value::Null))
    }

    fn create(&self, body: Value) -> String {
        let (code, v) = self.post("/sessions", body);
        assert_eq!(code, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    /// Polls until the session leaves `running`.
    fn settle(&self, id: &str) -> Value {
        let t = Instant::now();
        loop {
            let (code, v) = self.get(&format!("/sessions/{id}"));
            assert_eq!(code, StatusCode::OK);
            if v["status"] != "running" {
                return v;
            }
            assert!(t.elapsed() < Duration::from_secs(15), "session {id} stuck running");
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    fn hash(&self) -> String {
        self.get("/state").1["hash"].as_str().unwrap().to_string()
    }

    fn audit_len(&self) -> usize {
        self.get("/audit").1.as_array().unwrap().len()
    }

    /// Reads the event stream to its end.
    fn events(&self, id: &str) -> Vec<Value> {
        let r = self.http.get(format!("{}/sessions/{id}/events", self.base)).send().unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        assert_eq!(r.headers()["content-type"], "text/event-stream");
        BufReader::new(r)
            .lines()
            .map(Result::unwrap)
            .filter_map(|l| l.strip_prefix("data:").map(|d| serde_json::from_str(d.trim()).unwrap()))
            .collect()
    }
}

fn assert_gapless(events: &[Value]) {
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e["seq"], i as u64, "{events:?}");
    }
}

#[test]
fn listing_one_on_the_live_host() {
    let srv = default_server();
    let id = srv.create(json!({"instruction": "Increase the volume slightly"}));
    let s = srv.settle(&id);
    assert_eq!(s["status"], "succeeded", "{s}");
    assert_eq!(s["iterations"].as_array().unwrap().len(), 3);
    let v = srv.get("/state").1["state"]["player"]["volume"].as_f64().unwrap();
    assert!((v - 0.6).abs() < 1e-9);
    let audit = srv.get(&format!("/audit?session={id}")).1;
    let statuses: Vec<&str> = audit.as_array().unwrap().iter().map(|e| e["result_status"].as_str().unwrap()).collect();
    assert_eq!(statuses, ["runtime_error", "runtime_error", "ok"]);
    let list = srv.get("/sessions").1;
    assert_eq!(list[0]["id"], id.as_str());
    assert_eq!(list[0]["iterations"], 3);
}

#[test]
fn event_stream_replays_a_finished_session() {
    let srv = default_server();
    let id = srv.create(json!({"instruction": "Show my listening history", "fixture": "default"}));
    srv.settle(&id);
    let events = srv.events(&id);
    assert_gapless(&events);
    let last = events.last().unwrap();
    assert_eq!(last["kind"], "status_changed");
    assert_eq!(last["payload"]["to"], "succeeded");
    assert_eq!(events, srv.events(&id));
}

#[test]
fn event_stream_tails_a_running_session() {
    let srv = default_server();
    let id = srv.create(json!({"instruction": "Turn it down slowly", "fixture": "default"}));
    let t = Instant::now();
    let events = srv.events(&id);
    assert!(t.elapsed() >= Duration::from_millis(300), "stream closed before the session finished");
    assert_gapless(&events);
    let kinds: Vec<&str> = events.iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"execution_result"), "{kinds:?}");
    assert_eq!(events.last().unwrap()["payload"]["to"], "succeeded");
}

#[test]
fn bad_requests_are_rejected() {
    let srv = default_server();
    assert_eq!(srv.post("/sessions", json!({"instruction": "  "})).0, StatusCode::BAD_REQUEST);
    assert_eq!(srv.post("/sessions", json!({"instruction": "x", "fixture": "nope"})).0, StatusCode::BAD_REQUEST);
    assert_eq!(srv.post("/sessions", json!({"instruction": "x", "rules": "lenient"})).0, StatusCode::BAD_REQUEST);
    assert_eq!(srv.post("/sessions", json!({"instruction": "x", "max_iterations": 0})).0, StatusCode::BAD_REQUEST);
    assert_eq!(srv.get("/sessions/nope").0, StatusCode::NOT_FOUND);
    assert_eq!(srv.get("/sessions/nope/events").0, StatusCode::NOT_FOUND);
    assert_eq!(srv.post("/sessions/nope/approve", json!({"grant": true})).0, StatusCode::NOT_FOUND);
    assert_eq!(srv.post("/sessions/nope/rollback", json!({})).0, StatusCode::NOT_FOUND);
    assert_eq!(srv.audit_len(), 0);
}

#[test]
fn live_host_admits_one_session_at_a_time() {
    let srv = server(ServiceConfig { allow_raw_exec: true, ..Default::default() });
    let id = srv.create(json!({"instruction": "Turn it down slowly"}));
    let (code, v) = srv.post("/sessions", json!({"instruction": "Increase the volume slightly"}));
    assert_eq!(code, StatusCode::CONFLICT, "{v}");
    assert_eq!(srv.post("/execute", json!({"code": "1"})).0, StatusCode::CONFLICT);
    assert_eq!(srv.post(&format!("/sessions/{id}/rollback"), json!({})).0, StatusCode::CONFLICT);
    srv.create(json!({"instruction": "Turn it down slowly", "fixture": "default"}));
    assert_eq!(srv.settle(&id)["status"], "succeeded");
    srv.create(json!({"instruction": "Increase the volume slightly"}));
}

#[test]
fn approval_pauses_until_granted() {
    let srv = default_server();
    let id = srv.create(json!({"instruction": "Close the other tabs", "fixture": "multi-tab"}));
    let s = srv.settle(&id);
    assert_eq!(s["status"], "awaiting_approval", "{s}");
    assert_eq!(srv.post(&format!("/sessions/{id}/feedback"), json!({"accomplished": true})).0, StatusCode::CONFLICT);
    let (code, s) = srv.post(&format!("/sessions/{id}/approve"), json!({"grant": true}));
    assert_eq!(code, StatusCode::OK, "{s}");
    let s = srv.settle(&id);
    assert_eq!(s["status"], "succeeded", "{s}");
    assert_eq!(srv.post(&format!("/sessions/{id}/approve"), json!({"grant": true})).0, StatusCode::CONFLICT);
    let audit = srv.get(&format!("/audit?session={id}")).1;
    assert!(audit.as_array().unwrap().iter().any(|e| e["verdict_decision"] == "needs_approval"), "{audit}");
}

#[test]
fn declined_approval_leaves_the_host_alone() {
    let srv = default_server();
    let before = srv.hash();
    let id = srv.create(json!({"instruction": "Close the other tabs"}));
    assert_eq!(srv.settle(&id)["status"], "awaiting_approval");
    srv.post(&format!("/sessions/{id}/approve"), json!({"grant": false}));
    let s = srv.settle(&id);
    assert_ne!(s["status"], "succeeded", "{s}");
    assert_eq!(srv.hash(), before);
}

#[test]
fn user_feedback_resolves_a_failed_verification() {
    let srv = default_server();
    let id = srv.create(json!({"instruction": "Skip the song and ask me", "fixture": "default"}));
    let s = srv.settle(&id);
    assert_eq!(s["status"], "awaiting_user", "{s}");
    let (code, _) = srv.post(&format!("/sessions/{id}/feedback"), json!({"text": "looks right", "accomplished": true}));
    assert_eq!(code, StatusCode::OK);
    assert_eq!(srv.settle(&id)["status"], "succeeded");
}

#[test]
fn rollback_restores_the_pre_session_state() {
    let srv = default_server();
    let before = srv.hash();
    let id = srv.create(json!({"instruction": "Increase the volume slightly"}));
    assert_eq!(srv.settle(&id)["status"], "succeeded");
    assert_ne!(srv.hash(), before);
    assert_eq!(srv.post(&format!("/sessions/{id}/rollback"), json!({"snapshot_id": 9999})).0, StatusCode::NOT_FOUND);
    let (code, s) = srv.post(&format!("/sessions/{id}/rollback"), json!({}));
    assert_eq!(code, StatusCode::OK, "{s}");
    assert_eq!(srv.hash(), before);
    assert_eq!(srv.hash(), init_fixture("default").unwrap().hash());
    let audit = srv.get(&format!("/audit?session={id}")).1;
    assert_eq!(audit.as_array().unwrap().last().unwrap()["result_status"], "rolled_back");
}

#[test]
fn paused_session_rolls_back_to_rolled_back() {
    let srv = default_server();
    let id = srv.create(json!({"instruction": "Skip the song and ask me"}));
    assert_eq!(srv.settle(&id)["status"], "awaiting_user");
    let (code, s) = srv.post(&format!("/sessions/{id}/rollback"), json!({}));
    assert_eq!(code, StatusCode::OK, "{s}");
    assert_eq!(s["status"], "rolled_back");
    assert_eq!(srv.hash(), init_fixture("default").unwrap().hash());
    srv.create(json!({"instruction": "Increase the volume slightly"}));
}

#[test]
fn raw_execution_is_off_by_default() {
    let srv = default_server();
    let (code, _) = srv.post("/execute", json!({"code": "app.player.volume = 1"}));
    assert_eq!(code, StatusCode::FORBIDDEN);
    assert_eq!(srv.audit_len(), 0);
}

#[test]
fn raw_execution_runs_the_guarded_pipeline() {
    let srv = server(ServiceConfig { allow_raw_exec: true, ..Default::default() });
    let (code, r) = srv.post("/execute", json!({"code": "console.log(app.player.volume)"}));
    assert_eq!(code, StatusCode::OK, "{r}");
    assert_eq!(r["console"], json!(["0.5"]));
    assert_eq!(r["verdict"]["decision"], "allow");

    let before = srv.hash();
    let (_, r) = srv.post("/execute", json!({"code": "app.player.volume = 0.1; fetch('http://x')"}));
    assert_eq!(r["status"], "denied", "{r}");
    assert_eq!(r["error"]["kind"], "GuardDenied");
    let (_, r) = srv.post("/execute", json!({"code": "app.editor.closeOtherTabs()"}));
    assert_eq!(r["status"], "denied", "{r}");
    assert_eq!(srv.hash(), before);

    let (_, r) = srv.post("/execute", json!({"code": "app.player.volume = 0.8"}));
    assert_eq!(r["status"], "ok");
    assert_eq!(srv.get("/state").1["state"]["player"]["volume"], 0.8);

    let audit = srv.get("/audit?session=raw").1;
    let rows: Vec<(&str, &str)> = audit
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["verdict_decision"].as_str().unwrap(), e["result_status"].as_str().unwrap()))
        .collect();
    assert_eq!(rows, [("allow", "ok"), ("deny", "denied"), ("needs_approval", "denied"), ("allow", "ok")]);
}

#[test]
fn ui_is_served_statically() {
    let srv = default_server();
    let r = srv.http.get(format!("{}/ui/", srv.base)).send().unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert!(r.headers()["content-type"].to_str().unwrap().starts_with("text/html"));
    assert!(r.text().unwrap().contains("<html"));
}

/// Every route answers, read-only routes never touch state or the audit
/// log, and every state change made through a mutating route is audited.
#[test]
fn endpoint_coverage() {
    let srv = server(ServiceConfig { allow_raw_exec: true, ..Default::default() });
    let paused = srv.create(json!({"instruction": "Close the other tabs"}));
    assert_eq!(srv.settle(&paused)["status"], "awaiting_approval");

    let mut seen = Vec::new();
    let mut check = |method: &str, route: &str, call: &dyn Fn() -> (StatusCode, Value), settle: Option<&str>| {
        let (effect, _) = ENDPOINTS
            .iter()
            .find(|(m, r, _)| *m == method && *r == route)
            .map(|(_, _, e)| (*e, ()))
            .unwrap_or_else(|| panic!("{method} {route} not in the endpoint table"));
        let (h0, a0) = (srv.hash(), srv.audit_len());
        let (code, body) = call();
        assert!(code.is_success(), "{method} {route}: {code} {body}");
        if let Some(id) = settle {
            srv.settle(id);
        }
        let (h1, a1) = (srv.hash(), srv.audit_len());
        match effect {
            Effect::ReadOnly => {
                assert_eq!((h0.as_str(), a0), (h1.as_str(), a1), "{method} {route} changed something");
            }
            Effect::Agent | Effect::Raw | Effect::Rollback => {
                if h0 != h1 {
                    assert!(a1 > a0, "{method} {route} changed state without an audit entry");
                }
            }
        }
        seen.push((method.to_string(), route.to_string()));
        body
    };

    check("GET", "/sessions", &|| srv.get("/sessions"), None);
    check("GET", "/sessions/{id}", &|| srv.get(&format!("/sessions/{paused}")), None);
    check("GET", "/state", &|| srv.get("/state"), None);
    check("GET", "/audit", &|| srv.get("/audit"), None);
    check("GET", "/ui", &|| (srv.http.get(format!("{}/ui/", srv.base)).send().unwrap().status(), Value::Null), None);
    check("POST", "/sessions/{id}/approve", &|| srv.post(&format!("/sessions/{paused}/approve"), json!({"grant": true})), Some(&paused));
    check("GET", "/sessions/{id}/events", &|| (StatusCode::OK, json!(srv.events(&paused))), None);
    check("POST", "/sessions/{id}/rollback", &|| srv.post(&format!("/sessions/{paused}/rollback"), json!({})), None);
    let created = check(
        "POST",
        "/sessions",
        &|| srv.post("/sessions", json!({"instruction": "Skip the song and ask me"})),
        None,
    );
    let created = created["id"].as_str().unwrap().to_string();
    srv.settle(&created);
    check(
        "POST",
        "/sessions/{id}/feedback",
        &|| srv.post(&format!("/sessions/{created}/feedback"), json!({"text": "", "accomplished": true})),
        Some(&created),
    );
    check("POST", "/execute", &|| srv.post("/execute", json!({"code": "app.player.volume = 0.2"})), None);

    for (m, r, _) in ENDPOINTS {
        assert!(seen.iter().any(|(sm, sr)| sm == m && sr == r), "{m} {r} not exercised");
    }
}

#[test]
fn restart_fails_unfinished_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig { data_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let (id, hash) = {
        let srv = server(cfg.clone());
        let id = srv.create(json!({"instruction": "Skip the song and ask me"}));
        assert_eq!(srv.settle(&id)["status"], "awaiting_user");
        (id, srv.hash())
    };
    let srv = server(cfg);
    assert_eq!(srv.state.recovered, vec![id.clone()]);
    let s = srv.get(&format!("/sessions/{id}")).1;
    assert_eq!(s["status"], "failed");
    assert!(s["terminal_reason"].as_str().unwrap().contains("interrupted"));
    assert_eq!(srv.hash(), hash);
    let events = srv.events(&id);
    assert_gapless(&events);
    assert_eq!(events.last().unwrap()["payload"]["to"], "failed");
    assert_eq!(srv.post(&format!("/sessions/{id}/rollback"), json!({})).0, StatusCode::OK);
    assert_eq!(srv.hash(), init_fixture("default").unwrap().hash());
}
