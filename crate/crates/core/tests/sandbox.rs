use std::sync::Arc;
use std::time::Instant;

use actagent::host::init_fixture;
use actagent::safety::{load_rules, Guard};
use actagent::sandbox::{execute, ActionCode, ErrorKind, ExecStatus, ResourceLimits, SandboxError};
use serde_json::json;

fn run(src: &str) -> (actagent::host::HostState, actagent::sandbox::ExecutionResult) {
    let state = init_fixture("default").unwrap();
    execute(&ActionCode::js(src), &state, &ResourceLimits::default(), Guard::permissive()).unwrap()
}

#[test]
fn action_code_hash_is_sha256_of_source() {
    let c = ActionCode::js("1");
    assert_eq!(c.hash, "6b86b273ff34fce19d6b804eff5a3f5747ada4eaa22f1d49c01e52ddb7875b4b");
}

#[test]
fn successful_run_keeps_state_and_reports_diff() {
    let (after, r) = run("app.player.volume = 0.6; app.player.volume");
    assert_eq!(r.status, ExecStatus::Ok);
    assert_eq!(r.return_value, Some(json!(0.6)));
    assert_eq!(after.player.volume, 0.6);
    let paths: Vec<&str> = r.state_diff.paths().collect();
    assert_eq!(paths, vec!["player/volume", "logical_clock"]);
}

#[test]
fn missing_namespace_reads_as_type_error() {
    let (after, r) = run("const v = app.musicPlayer.volume;");
    assert_eq!(r.status, ExecStatus::RuntimeError);
    let e = r.error.unwrap();
    assert_eq!(e.kind, ErrorKind::TypeError);
    assert_eq!(e.text, "TypeError: Cannot read property 'volume' of undefined");
    assert_eq!(e.location.as_deref(), Some("1:11"));
    assert_eq!(after, init_fixture("default").unwrap());
}

#[test]
fn error_kinds_are_classified() {
    for (src, kind) in [
        ("undefinedName + 1", ErrorKind::ReferenceError),
        ("throw new Error('Player component not found')", ErrorKind::ThrownValue),
        ("throw 'plain'", ErrorKind::ThrownValue),
        ("new Array(-1)", ErrorKind::ThrownValue),
        ("let = ;", ErrorKind::SyntaxError),
        ("JSON.parse('{')", ErrorKind::SyntaxError),
    ] {
        let (_, r) = run(src);
        assert_eq!(r.status, ExecStatus::RuntimeError, "{src}");
        assert_eq!(r.error.unwrap().kind, kind, "{src}");
    }
}

#[test]
fn failed_run_discards_earlier_writes() {
    let before = init_fixture("default").unwrap();
    let (after, r) = run("app.player.volume = 1; app.editor.fontSize = 30; throw new Error('late')");
    assert_eq!(r.status, ExecStatus::RuntimeError);
    assert_eq!(r.error.as_ref().unwrap().text, "Error: late");
    assert!(r.state_diff.is_empty());
    assert_eq!(after, before);
}

#[test]
fn console_levels_are_prefixed() {
    let (_, r) = run("console.log('a'); console.warn('b'); console.error('c'); console.info('d')");
    assert_eq!(r.console, vec!["a", "[warn] b", "[error] c", "d"]);
    assert_eq!(r.console_errors().collect::<Vec<_>>(), vec!["b", "c"]);
}

#[test]
fn infinite_loop_times_out_within_twice_the_wall_limit() {
    let limits = ResourceLimits { wall_timeout_ms: 300, step_budget: u64::MAX, ..Default::default() };
    let state = init_fixture("default").unwrap();
    let t = Instant::now();
    let (after, r) =
        execute(&ActionCode::js("app.player.volume = 1; while (true) {}"), &state, &limits, Guard::permissive()).unwrap();
    assert!(t.elapsed().as_millis() < 600, "{:?}", t.elapsed());
    assert_eq!(r.status, ExecStatus::Timeout);
    assert_eq!(r.error.unwrap().kind, ErrorKind::LimitExceeded);
    assert_eq!(after, state);
}

#[test]
fn step_budget_stops_long_loops() {
    let (after, r) = run("app.editor.fontSize = 20; let i = 0; while (i < 1e8) { i++; }");
    assert!(matches!(r.status, ExecStatus::ResourceExhausted | ExecStatus::Timeout), "{:?}", r.status);
    assert_eq!(after, init_fixture("default").unwrap());
}

#[test]
fn output_budget_is_enforced() {
    let limits = ResourceLimits { output_budget: 100, ..Default::default() };
    let state = init_fixture("default").unwrap();
    let (_, r) =
        execute(&ActionCode::js("for (let i = 0; i < 100; i++) console.log('xxxxxxxxxx')"), &state, &limits, Guard::permissive())
            .unwrap();
    assert_eq!(r.status, ExecStatus::ResourceExhausted);
}

#[test]
fn deep_recursion_is_a_resource_error() {
    let (_, r) = run("function f(n) { return f(n + 1); } f(0)");
    assert_eq!(r.status, ExecStatus::ResourceExhausted);
}

#[test]
fn guard_denial_aborts_uncatchably() {
    let rules = load_rules("deny_write app.player.volume \"fixed\"").unwrap();
    let state = init_fixture("default").unwrap();
    let src = "try { app.player.volume = 1 } catch (e) { console.log('caught') } app.editor.fontSize = 9";
    let (after, r) = execute(&ActionCode::js(src), &state, &ResourceLimits::default(), Guard::new(Arc::new(rules), false)).unwrap();
    assert_eq!(r.status, ExecStatus::Denied);
    let e = r.error.unwrap();
    assert_eq!(e.kind, ErrorKind::GuardDenied);
    assert!(e.message.contains("write app.player.volume"), "{}", e.message);
    assert!(r.console.is_empty());
    assert_eq!(after, state);
}

#[test]
fn unsupported_language_is_rejected() {
    let state = init_fixture("default").unwrap();
    let e = execute(&ActionCode::new("python", "print(1)"), &state, &ResourceLimits::default(), Guard::permissive()).unwrap_err();
    assert_eq!(e, SandboxError::UnsupportedLanguage("python".into()));
    assert!(execute(&ActionCode::new("JavaScript", "1"), &state, &ResourceLimits::default(), Guard::permissive()).is_ok());
}

#[test]
fn keys_enumerate_namespaces() {
    let (_, r) = run("Object.keys(app.player)");
    assert_eq!(r.return_value, Some(json!(["currentTrack", "next", "previous", "queue", "volume"])));
}

#[test]
fn listing_two_tab_click_reaches_history() {
    let (after, r) = run(
        "app.ui.navigate('library');\nconst tabs = app.ui.find('tab');\n\
         if (tabs.length > 5) { tabs[5].click(); } else { console.error('Play History tab not found.'); }",
    );
    assert_eq!(r.status, ExecStatus::Ok, "{:?}", r.error);
    assert_eq!(after.current_route, "library/history");
    let (after, r) = run(
        "const tabs = app.ui.find('tab');\n\
         if (tabs.length > 5) { tabs[5].click(); } else { console.error('Play History tab not found.'); }",
    );
    assert_eq!(r.console, vec!["[error] Play History tab not found."]);
    assert_eq!(after.current_route, "home");
}
