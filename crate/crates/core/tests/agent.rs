use std::sync::{Arc, Mutex};
use std::time::Instant;

use actagent::agent::{
    build_prompt, parse_response, render_history, Agent, AgentAction, AgentConfig, AgentError, AgentResponse,
    ApprovalPolicy, EventKind, Feedback, IterationRecord, ParseError, Session, SessionEvent, SessionStatus,
    VerificationMode,
};
use actagent::host::{init_fixture, HostState};
use actagent::llm::{ScriptTable, ScriptedProvider};
use actagent::sandbox::{ErrorKind, ExecStatus};
use actagent::store::{AuditFilter, Store};
use proptest::prelude::*;
use serde_json::{json, Value as Json};

const LISTING1: &str = include_str!("../assets/scripts/listing1.json");
const LISTING2: &str = include_str!("../assets/scripts/listing2.json");
const LISTING2_FAIL: &str = include_str!("../assets/scripts/listing2_fail.json");

fn provider(table: &str) -> Arc<ScriptedProvider> {
    Arc::new(ScriptedProvider::new(ScriptTable::parse(table).unwrap()))
}

fn entries(v: Json) -> String {
    json!({ "entries": v }).to_string()
}

fn agent(table: &str, cfg: AgentConfig) -> Agent {
    Agent::new(cfg, provider(table), Arc::new(Store::in_memory()))
}

fn skip() -> AgentConfig {
    AgentConfig { verification: VerificationMode::Skip, ..Default::default() }
}

fn run(agent: &Agent, instruction: &str, fixture: &str) -> (Session, HostState) {
    let mut state = init_fixture(fixture).unwrap();
    let mut s = agent.start(instruction, fixture, &state).unwrap();
    agent.run(&mut s, &mut state).unwrap();
    (s, state)
}

fn js(thinking: &str, code: &str, final_step: bool) -> Json {
    json!({"thinking": thinking, "action_code": format!("js:{code}"), "final_step": final_step})
}

#[test]
fn listing_one_takes_three_rounds() {
    let a = agent(LISTING1, AgentConfig::default());
    let t = Instant::now();
    let (s, state) = run(&a, "Increase the volume slightly", "default");
    assert!(t.elapsed().as_secs_f64() < 1.0, "{:?}", t.elapsed());
    assert_eq!(s.status, SessionStatus::Succeeded, "{:?}", s.terminal_reason);
    assert_eq!(s.iterations.len(), 3);

    let r1 = s.iterations[0].result.as_ref().unwrap();
    assert_eq!(r1.status, ExecStatus::RuntimeError);
    let e1 = r1.error.as_ref().unwrap();
    assert!(matches!(e1.kind, ErrorKind::TypeError | ErrorKind::ReferenceError));
    assert!(e1.message.contains("volume"), "{}", e1.message);

    let e2 = s.iterations[1].result.as_ref().unwrap().error.as_ref().unwrap();
    assert_eq!(e2.kind, ErrorKind::ThrownValue);
    assert!(e2.message.contains("Player component not found"));

    let r3 = s.iterations[2].result.as_ref().unwrap();
    assert_eq!(r3.status, ExecStatus::Ok);
    assert_eq!(r3.console, vec!["Volume increased to 0.6"]);
    assert!((state.player.volume - 0.6).abs() < 1e-9);
    let v = s.iterations[2].verification.as_ref().unwrap();
    assert!(v.passed && v.code_hash.is_some());
}

#[test]
fn history_carries_every_earlier_status_and_error() {
    let a = agent(LISTING1, AgentConfig { max_iterations: 2, ..Default::default() });
    let (s, _) = run(&a, "Increase the volume slightly", "default");
    assert_eq!(s.status, SessionStatus::Failed);
    let prompt = build_prompt(&s, &[], "An app.", 100_000);
    for it in &s.iterations {
        let r = it.result.as_ref().unwrap();
        assert!(prompt.contains(&format!("status={}", r.status.as_str())));
        assert!(prompt.contains(&r.error.as_ref().unwrap().text));
        assert!(prompt.contains(&it.response.as_ref().unwrap().to_json()));
    }
    assert!(prompt.contains("TypeError: Cannot read property 'volume' of undefined"));
    assert!(prompt.contains("Error: Player component not found"));
}

#[test]
fn prompt_sections_come_in_order() {
    let a = agent(LISTING1, AgentConfig { max_iterations: 1, ..Default::default() });
    let (s, _) = run(&a, "Increase the volume slightly", "default");
    let fresh = Session { iterations: vec![], status: SessionStatus::Running, ..s.clone() };
    let p = build_prompt(&fresh, &[], "APPDESC", 10_000);
    assert!(p.starts_with("APPDESC"));
    let order = ["APPDESC", "`app`", "\"action_code\"", "<HISTORY>\n\n</HISTORY>", "Request: Increase the volume slightly"];
    let pos: Vec<usize> = order.iter().map(|m| p.find(m).unwrap_or_else(|| panic!("missing {m}"))).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    assert!(p.ends_with("Increase the volume slightly"));
}

#[test]
fn long_histories_summarize_oldest_first() {
    let a = agent(
        &entries(json!([{ "response": js("try", &format!("console.log('{}'); undefinedName", "x".repeat(300)), true) }])),
        AgentConfig { max_iterations: 5, ..Default::default() },
    );
    let (s, _) = run(&a, "anything", "default");
    assert_eq!(s.iterations.len(), 5);
    let full = render_history(&s.iterations, usize::MAX);
    let h = render_history(&s.iterations, full.len() / 2);
    assert!(h.len() < full.len());
    assert!(h.starts_with("Iteration 1: status=runtime_error, error=ReferenceError-like"));
    let newest = actagent::agent::render_iteration(&s.iterations[4]);
    assert!(h.ends_with(&newest));
    let tiny = render_history(&s.iterations, 0);
    assert_eq!(tiny.lines().filter(|l| l.starts_with("Iteration ") && l.contains(": status=")).count(), 4);
    assert!(tiny.ends_with(&newest));
}

#[test]
fn listing_two_reaches_the_history_view() {
    let a = agent(LISTING2, AgentConfig::default());
    let (s, state) = run(&a, "Show my listening history", "default");
    assert_eq!(s.status, SessionStatus::Succeeded, "{:?}", s.terminal_reason);
    assert_eq!(s.iterations.len(), 1);
    assert_eq!(state.current_route, "library/history");
}

#[test]
fn listing_two_failure_takes_the_console_error_path() {
    let a = agent(LISTING2_FAIL, AgentConfig::default());
    let (s, state) = run(&a, "Show my listening history", "default");
    let it = &s.iterations[0];
    assert_eq!(it.result.as_ref().unwrap().console, vec!["[error] Play History tab not found."]);
    assert_eq!(state.current_route, "library");
    assert_eq!(s.status, SessionStatus::AwaitingUser);
    assert!(!it.verification.as_ref().unwrap().passed);
}

#[test]
fn not_possible_fails_with_reasons() {
    let a = agent(&entries(json!([{ "response": {"action_code": "N/A:no alarm clock here", "final_step": true} }])), skip());
    let (s, _) = run(&a, "Set an alarm", "default");
    assert_eq!(s.status, SessionStatus::Failed);
    assert_eq!(s.terminal_reason.as_deref(), Some("not possible: no alarm clock here"));
    assert_eq!(s.iterations[0].status_label(), "not_possible");
}

#[test]
fn parse_errors_are_fed_back() {
    let table = entries(json!([
        { "iteration": 1, "response": "I will just skip the JSON this time." },
        { "last_error": "no JSON object", "response": js("fixed", "app.player.next()", true) },
    ]));
    let a = agent(&table, skip());
    let (s, state) = run(&a, "Play the next song", "default");
    assert_eq!(s.status, SessionStatus::Succeeded);
    assert_eq!(s.iterations[0].parse_error.as_deref(), Some("no JSON object found in the response"));
    assert!(s.iterations[0].response.is_none());
    assert_eq!(state.player.current_index, Some(1));
    let h = render_history(&s.iterations[..1], 10_000);
    assert!(h.contains("status=parse_error") && h.contains("Reply again"));
}

#[test]
fn iteration_count_is_bounded() {
    let a = agent(&entries(json!([{ "response": js("again", "throw new Error('nope')", true) }])), AgentConfig::default());
    let (s, state) = run(&a, "Do the impossible", "default");
    assert_eq!(s.status, SessionStatus::Failed);
    assert_eq!(s.iterations.len(), 5);
    assert_eq!(s.llm_calls, 5);
    assert_eq!(state, init_fixture("default").unwrap());
}

#[test]
fn non_final_steps_continue_the_loop() {
    let table = entries(json!([
        { "iteration": 1, "response": js("look first", "console.log(app.editor.fontSize)", false) },
        { "iteration": 2, "response": js("now change it", "app.editor.fontSize = app.editor.fontSize + 2", true) },
    ]));
    let (s, state) = run(&agent(&table, skip()), "Increase the font size by 2", "default");
    assert_eq!(s.status, SessionStatus::Succeeded);
    assert_eq!(s.iterations[0].result.as_ref().unwrap().console, vec!["14"]);
    assert_eq!(state.active_document().font_size, 16);
}

#[test]
fn static_denial_keeps_running_and_mutates_nothing() {
    let table = entries(json!([
        { "iteration": 1, "response": js("phone home", "app.player.volume = 1; fetch('http://x')", true) },
        { "response": js("ok", "app.player.volume = 0.7", true) },
    ]));
    let a = agent(&table, skip());
    let mut state = init_fixture("default").unwrap();
    let before = state.hash();
    let mut s = a.start("Turn it up", "default", &state).unwrap();
    a.step(&mut s, &mut state).unwrap();
    assert_eq!(s.status, SessionStatus::Running);
    assert_eq!(s.iterations[0].status_label(), "denied");
    assert!(s.iterations[0].result.is_none());
    assert_eq!(state.hash(), before);
    assert!(s.iterations[0].feedback_text().unwrap().contains("network access"));
    a.run(&mut s, &mut state).unwrap();
    assert_eq!(s.status, SessionStatus::Succeeded);
    assert_eq!(state.player.volume, 0.7);
}

const CLOSE_TABS: &str = r#"{"entries":[{"response":{"thinking":"close the rest","action_code":"js:app.editor.closeOtherTabs()","final_step":true}}]}"#;

#[test]
fn approval_grant_executes_the_pending_code() {
    let a = agent(CLOSE_TABS, skip());
    let mut state = init_fixture("multi-tab").unwrap();
    let before = state.hash();
    let mut s = a.start("Close all other tabs", "multi-tab", &state).unwrap();
    a.run(&mut s, &mut state).unwrap();
    assert_eq!(s.status, SessionStatus::AwaitingApproval);
    assert!(s.iterations[0].result.is_none());
    assert_eq!(state.hash(), before);
    assert!(matches!(a.step(&mut s, &mut state), Err(AgentError::WrongState { .. })));
    a.incorporate_feedback(&mut s, &mut state, Feedback::Approval { grant: true }).unwrap();
    assert_eq!(s.status, SessionStatus::Succeeded);
    assert_eq!(state.editor.tabs.len(), 1);
    assert_eq!(s.iterations[0].approval, Some(true));
}

#[test]
fn approval_denial_enters_history() {
    let a = agent(CLOSE_TABS, AgentConfig { max_iterations: 2, ..skip() });
    let mut state = init_fixture("multi-tab").unwrap();
    let before = state.hash();
    let mut s = a.start("Close all other tabs", "multi-tab", &state).unwrap();
    a.run(&mut s, &mut state).unwrap();
    a.incorporate_feedback(&mut s, &mut state, Feedback::Approval { grant: false }).unwrap();
    assert_eq!(s.status, SessionStatus::Running);
    assert_eq!(state.hash(), before);
    let p = build_prompt(&s, &[], "", 10_000);
    assert!(p.contains("status=approval_declined"));
    assert!(p.contains("closing tabs is destructive"));
    a.run(&mut s, &mut state).unwrap();
    assert_eq!(s.status, SessionStatus::AwaitingApproval);
    a.incorporate_feedback(&mut s, &mut state, Feedback::Approval { grant: false }).unwrap();
    assert_eq!(s.status, SessionStatus::Failed);
    assert_eq!(state.hash(), before);
}

#[test]
fn approval_policies_decide_without_pausing() {
    let (s, state) = run(&agent(CLOSE_TABS, AgentConfig { approval: ApprovalPolicy::AutoGrant, ..skip() }), "Close all other tabs", "multi-tab");
    assert_eq!(s.status, SessionStatus::Succeeded);
    assert_eq!(state.editor.tabs.len(), 1);
    let (s, state) = run(
        &agent(CLOSE_TABS, AgentConfig { approval: ApprovalPolicy::AutoDeny, max_iterations: 2, ..skip() }),
        "Close all other tabs",
        "multi-tab",
    );
    assert_eq!(s.status, SessionStatus::Failed);
    assert_eq!(state.editor.tabs.len(), 3);
    assert!(s.iterations.iter().all(|i| i.status_label() == "approval_declined"));
}

#[test]
fn user_feedback_resumes_or_finishes() {
    let table = entries(json!([
        { "phase": "verify", "response": js("check", "console.log('VERIFY:FAIL')", true) },
        { "last_error": "wrong view", "response": js("retry", "app.ui.navigate('library/favorites')", true) },
        { "response": js("go", "app.ui.navigate('library')", true) },
    ]));
    let a = agent(&table, AgentConfig::default());
    let mut state = init_fixture("default").unwrap();
    let mut s = a.start("Show my favorite songs", "default", &state).unwrap();
    a.run(&mut s, &mut state).unwrap();
    assert_eq!(s.status, SessionStatus::AwaitingUser);
    assert_eq!(s.iterations[0].verification.as_ref().unwrap().detail, "VERIFY:FAIL");
    let fb = Feedback::User { text: "that opened the wrong view".into(), accomplished: false };
    a.incorporate_feedback(&mut s, &mut state, fb).unwrap();
    assert_eq!(s.status, SessionStatus::Running);
    assert!(build_prompt(&s, &[], "", 10_000).contains("User feedback: that opened the wrong view"));
    a.run(&mut s, &mut state).unwrap();
    assert_eq!(state.current_route, "library/favorites");
    assert_eq!(s.status, SessionStatus::AwaitingUser);
    a.incorporate_feedback(&mut s, &mut state, Feedback::User { text: String::new(), accomplished: true }).unwrap();
    assert_eq!(s.status, SessionStatus::Succeeded);
    let again = a.incorporate_feedback(&mut s, &mut state, Feedback::User { text: "x".into(), accomplished: true });
    assert!(matches!(again, Err(AgentError::WrongState { status: SessionStatus::Succeeded, .. })));
    let approve = a.incorporate_feedback(&mut s, &mut state, Feedback::Approval { grant: true });
    assert!(matches!(approve, Err(AgentError::WrongState { .. })));
}

#[test]
fn verification_writes_are_blocked() {
    let table = entries(json!([
        { "phase": "verify", "response": js("cheat", "app.player.volume = 0.6; console.log('VERIFY:PASS')", true) },
        { "response": js("up", "app.player.volume = 0.9", true) },
    ]));
    let (s, state) = run(&agent(&table, AgentConfig::default()), "Increase the volume slightly", "default");
    assert_eq!(s.status, SessionStatus::AwaitingUser);
    let v = s.iterations[0].verification.as_ref().unwrap();
    assert!(!v.passed);
    assert!(v.detail.contains("denied"), "{}", v.detail);
    assert_eq!(state.player.volume, 0.9);
}

#[test]
fn a_second_model_can_verify() {
    let verifier = provider(&entries(json!([{ "phase": "verify", "response": js("check", "console.log('VERIFY:PASS')", true) }])));
    let a = agent(&entries(json!([{ "response": js("next", "app.player.next()", true) }])), AgentConfig {
        verify_model: Some("checker".into()),
        ..Default::default()
    })
    .with_verify_provider(verifier);
    let (s, _) = run(&a, "Play the next song", "default");
    assert_eq!(s.status, SessionStatus::Succeeded);
}

#[test]
fn oracle_failures_are_terminal_and_roll_back() {
    let table = entries(json!([{ "response": js("wrong page", "app.ui.navigate('library')", true) }]));
    let oracle: actagent::agent::Oracle = Arc::new(|_, fin: &HostState, _| fin.current_route == "library/history");
    let cfg = AgentConfig { verification: VerificationMode::Oracle(oracle), rollback_on_failure: true, ..Default::default() };
    let a = agent(&table, cfg);
    let (s, state) = run(&a, "Show my listening history", "default");
    assert_eq!(s.status, SessionStatus::RolledBack);
    assert!(!s.iterations[0].verification.as_ref().unwrap().passed);
    assert_eq!(state, init_fixture("default").unwrap());
    let log = a.store().query_audit(&AuditFilter::session(&s.id));
    assert_eq!(log.last().unwrap().result_status, "rolled_back");
}

#[test]
fn rollback_on_failure_restores_the_pre_session_state() {
    let table = entries(json!([
        { "iteration": 1, "response": js("step one", "app.editor.fontSize = 30; app.player.next()", false) },
        { "response": {"action_code": "N/A:cannot finish", "final_step": true} },
    ]));
    let (s, state) = run(&agent(&table, AgentConfig { rollback_on_failure: true, ..skip() }), "x", "default");
    assert_eq!(s.status, SessionStatus::RolledBack);
    assert_eq!(state, init_fixture("default").unwrap());
    let (s, state) = run(&agent(&table, skip()), "x", "default");
    assert_eq!(s.status, SessionStatus::Failed);
    assert_eq!(state.active_document().font_size, 30);
}

#[test]
fn every_iteration_is_audited_with_its_snapshot() {
    let a = agent(LISTING1, AgentConfig::default());
    let (s, _) = run(&a, "Increase the volume slightly", "default");
    let log = a.store().query_audit(&AuditFilter::session(&s.id));
    let statuses: Vec<&str> = log.iter().map(|e| e.result_status.as_str()).collect();
    assert_eq!(statuses, vec!["runtime_error", "runtime_error", "ok"]);
    for (e, it) in log.iter().zip(&s.iterations) {
        assert_eq!(e.iteration_index, it.index);
        assert_eq!(e.snapshot_id, it.snapshot_id);
        assert_eq!(e.verdict_decision.as_deref(), Some("allow"));
    }
    assert!(log[2].state_diff.paths().any(|p| p == "player/volume"));
    let snap = a.store().snapshot(s.iterations[2].snapshot_id).unwrap();
    assert_eq!(snap.state, init_fixture("default").unwrap());
}

#[test]
fn events_are_gapless_and_persisted() {
    let seen: Arc<Mutex<Vec<SessionEvent>>> = Arc::default();
    let sink = seen.clone();
    let a = agent(LISTING1, AgentConfig::default()).with_events(Arc::new(move |e| sink.lock().unwrap().push(e.clone())));
    let (s, _) = run(&a, "Increase the volume slightly", "default");
    let seen = seen.lock().unwrap();
    assert!(seen.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    assert_eq!(seen.len() as u64, s.event_seq);
    let stored: Vec<SessionEvent> =
        a.store().events(&s.id).into_iter().map(|v| serde_json::from_value(v).unwrap()).collect();
    assert_eq!(&stored, &*seen);
    let kinds: Vec<EventKind> = seen.iter().map(|e| e.kind).collect();
    assert_eq!(kinds.iter().filter(|k| **k == EventKind::IterationStarted).count(), 3);
    assert_eq!(kinds.last(), Some(&EventKind::StatusChanged));
    assert_eq!(seen.last().unwrap().payload["to"], "succeeded");
}

#[test]
fn scripted_sessions_are_reproducible() {
    let once = || {
        let a = agent(LISTING1, AgentConfig::default());
        let mut state = init_fixture("default").unwrap();
        let mut s = a.start_with_id("fixed".into(), "Increase the volume slightly", "default", &state).unwrap();
        a.run(&mut s, &mut state).unwrap();
        let mut v = s.to_json();
        scrub(&mut v);
        let mut ev: Vec<Json> = a.store().events("fixed");
        ev.iter_mut().for_each(scrub);
        (serde_json::to_string(&v).unwrap(), serde_json::to_string(&ev).unwrap(), state.hash())
    };
    assert_eq!(once(), once());
}

fn scrub(v: &mut Json) {
    match v {
        Json::Object(m) => {
            for (k, x) in m.iter_mut() {
                if k == "duration_ms" || k == "created_at_ms" {
                    *x = Json::Null;
                } else {
                    scrub(x);
                }
            }
        }
        Json::Array(a) => a.iter_mut().for_each(scrub),
        _ => {}
    }
}

#[test]
fn model_review_can_only_escalate() {
    let table = entries(json!([
        { "phase": "safeguard", "response": "ESCALATE: changes playback for everyone" },
        { "response": js("up", "app.player.volume = 0.8", true) },
    ]));
    let a = agent(&table, AgentConfig { llm_safeguard: true, ..skip() });
    let (s, state) = run(&a, "Turn it up", "default");
    assert_eq!(s.status, SessionStatus::AwaitingApproval);
    assert_eq!(s.iterations[0].verdict.as_ref().unwrap().reasons[0].reason, "changes playback for everyone");
    assert_eq!(state.player.volume, 0.5);

    let table = entries(json!([
        { "phase": "safeguard", "response": "ALLOW" },
        { "response": js("phone home", "fetch('x')", true) },
    ]));
    let a = agent(&table, AgentConfig { llm_safeguard: true, max_iterations: 1, ..skip() });
    let (s, _) = run(&a, "Turn it up", "default");
    assert_eq!(s.iterations[0].status_label(), "denied");
    assert_eq!(s.llm_calls, 1);
}

#[test]
fn model_errors_fail_the_session() {
    let a = agent(&entries(json!([])), AgentConfig::default());
    let mut state = init_fixture("default").unwrap();
    let mut s = a.start("Play the next song", "default", &state).unwrap();
    assert!(matches!(a.run(&mut s, &mut state), Err(AgentError::Llm(_))));
    assert_eq!(s.status, SessionStatus::Failed);
    let a = agent(&entries(json!([{ "response": js("x", "throw 1", true) }])), AgentConfig { max_llm_calls: Some(2), ..Default::default() });
    let mut s = a.start("x", "default", &state).unwrap();
    assert!(a.run(&mut s, &mut state).is_err());
    assert_eq!(s.iterations.len(), 2);
    assert!(s.terminal_reason.unwrap().contains("budget"));
}

#[test]
fn interrupted_sessions_are_failed_on_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let a = Agent::new(AgentConfig::default(), provider(CLOSE_TABS), store);
        let mut state = init_fixture("multi-tab").unwrap();
        let mut s = a.start("Close all other tabs", "multi-tab", &state).unwrap();
        a.run(&mut s, &mut state).unwrap();
        assert_eq!(s.status, SessionStatus::AwaitingApproval);
        s.id
    };
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(actagent::agent::recover_interrupted(&store).unwrap(), vec![id.clone()]);
    let s: Session = serde_json::from_value(store.sessions()[&id].clone()).unwrap();
    assert_eq!(s.status, SessionStatus::Failed);
    let ev = store.events(&id);
    assert!(ev.iter().enumerate().all(|(i, e)| e["seq"] == i as u64));
    assert!(actagent::agent::recover_interrupted(&store).unwrap().is_empty());
}

#[test]
fn appendix_examples_parse() {
    let r = parse_response(r#"{"thinking":"advance queue","action_code":"js:app.player.next()","final_step":true}"#).unwrap();
    assert_eq!(r, AgentResponse::code("advance queue", "app.player.next()", true));
    let r = parse_response(r#"{"thinking":"impossible","action_code":"N/A:no such feature","final_step":true}"#).unwrap();
    assert_eq!(r.action, AgentAction::NotPossible { reasons: "no such feature".into() });
    let fenced = "```json\n{\"thinking\":\"advance queue\",\"action_code\":\"js:app.player.next()\",\"final_step\":true}\n```";
    assert_eq!(parse_response(fenced).unwrap(), AgentResponse::code("advance queue", "app.player.next()", true));
    let bare = parse_response(r#"{"action_code":"N/A:offline","final_step":true}"#).unwrap();
    assert_eq!(bare.thinking, "");
}

#[test]
fn malformed_replies_are_classified() {
    use ParseError::*;
    for (text, err) in [
        ("no json at all", NoJsonObject),
        ("[1, 2]", NoJsonObject),
        (r#"{"thinking":"t","final_step":true}"#, MissingKey("action_code")),
        (r#"{"thinking":"t","action_code":"js:1"}"#, MissingKey("final_step")),
        (r#"{"action_code":"js:1","final_step":true}"#, MissingKey("thinking")),
        (r#"{"thinking":"t","action_code":"js:1","final_step":"true"}"#, WrongType { key: "final_step", expected: "true or false" }),
        (r#"{"thinking":"t","action_code":"js:1","final_step":1}"#, WrongType { key: "final_step", expected: "true or false" }),
        (r#"{"thinking":"t","action_code":"python:print(1)","final_step":true}"#, UnknownTag("python".into())),
        (r#"{"thinking":"t","action_code":7,"final_step":true}"#, WrongType { key: "action_code", expected: "a string" }),
    ] {
        assert_eq!(parse_response(text), Err(err), "{text}");
    }
    let r = parse_response("Sure {not json} here: {\"thinking\":\"a\",\"action_code\":\"js:x\",\"final_step\":false} done").unwrap();
    assert_eq!(r, AgentResponse::code("a", "x", false));
}

fn response_strategy() -> impl Strategy<Value = AgentResponse> {
    prop_oneof![
        (any::<String>(), any::<String>(), any::<bool>()).prop_map(|(t, c, f)| AgentResponse::code(t, c, f)),
        (any::<String>(), any::<String>()).prop_map(|(t, r)| AgentResponse::not_possible(t, r.trim())),
    ]
}

fn wrap(canonical: &str, variant: u8, prose: &str) -> String {
    match variant {
        0 => canonical.to_string(),
        1 => format!("```json\n{canonical}\n```"),
        2 => format!("```\n{canonical}\n```"),
        3 => format!("{prose}\n{canonical}\n{prose}"),
        4 => format!("{prose}\n```json\n{canonical}\n```\n{prose}"),
        _ => {
            let v: Json = serde_json::from_str(canonical).unwrap();
            serde_json::to_string_pretty(&v).unwrap()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn protocol_round_trip(r in response_strategy(), variant in 0u8..6, prose in "[A-Za-z ,.:!?'()\\-]{0,60}") {
        let canonical = r.to_json();
        let parsed = parse_response(&wrap(&canonical, variant, &prose)).unwrap();
        prop_assert_eq!(parsed.to_json(), canonical);
        prop_assert_eq!(parsed, r);
    }
}

#[test]
fn status_labels_cover_pending_records() {
    let rec = IterationRecord {
        index: 1,
        prompt_digest: String::new(),
        raw_response: String::new(),
        response: None,
        parse_error: None,
        verdict: None,
        approval: None,
        result: None,
        verification: None,
        snapshot_id: 0,
        feedback: None,
    };
    assert_eq!(rec.status_label(), "pending");
    assert_eq!(rec.feedback_text(), None);
}
