//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

use std::cell::Cell;
use std::fs;
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use actagent::agent::{parse_response, Agent, AgentConfig, AgentResponse, SessionStatus};
use actagent::bench::{run_benchmark, run_task, BenchOptions, Suite, TaskVerdict};
use actagent::host::{init_fixture, HostState};
use actagent::llm::{builtin_script, Cassette, CassetteProvider, Provider, ScriptedProvider};
use actagent::safety::{analyze, Decision, Guard, RuleSet};
use actagent::sandbox::{execute, ActionCode, ErrorKind, ExecStatus, ResourceLimits};
use actagent::store::{AuditFilter, Store};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn scripted(name: &str) -> Arc<dyn Provider> {
    Arc::new(ScriptedProvider::new(builtin_script(name).unwrap()))
}

fn run_session(script: &str, instruction: &str) -> (actagent::agent::Session, HostState, Duration) {
    let agent = Agent::new(AgentConfig::default(), scripted(script), Arc::new(Store::in_memory()));
    let mut state = init_fixture("default").unwrap();
    let t = Instant::now();
    let mut s = agent.start(instruction, "default", &state).unwrap();
    agent.run(&mut s, &mut state).unwrap();
    (s, state, t.elapsed())
}

fn listing_one() -> Outcome {
    let (s, state, took) = run_session("listing1", "Increase the volume slightly");
    ensure!(s.status == SessionStatus::Succeeded, "status {}", s.status);
    ensure!(s.iterations.len() == 3, "{} iterations", s.iterations.len());
    let err = |i: usize| s.iterations[i].result.as_ref().and_then(|r| r.error.clone());
    let e1 = err(0).ok_or("iteration 1 has no error")?;
    ensure!(matches!(e1.kind, ErrorKind::TypeError | ErrorKind::ReferenceError), "iteration 1 kind {:?}", e1.kind);
    ensure!(e1.message.contains("volume"), "iteration 1 message {}", e1.message);
    let e2 = err(1).ok_or("iteration 2 has no error")?;
    ensure!(e2.kind == ErrorKind::ThrownValue, "iteration 2 kind {:?}", e2.kind);
    ensure!(e2.message.contains("Player component not found"), "iteration 2 message {}", e2.message);
    ensure!(s.iterations[2].result.as_ref().is_some_and(|r| r.is_ok()), "iteration 3 not ok");
    ensure!((state.player.volume - 0.6).abs() < 1e-9, "volume {}", state.player.volume);
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("3 iterations, volume {}, {} ms", state.player.volume, took.as_millis()))
}

fn listing_two() -> Outcome {
    let (s, state, _) = run_session("listing2", "Show my listening history");
    ensure!(s.status == SessionStatus::Succeeded, "status {}", s.status);
    ensure!(state.current_route == "library/history", "route {}", state.current_route);

    let home = init_fixture("default").unwrap();
    let (_, r) = execute(&ActionCode::js("app.ui.find('tab').length"), &home, &ResourceLimits::default(), Guard::permissive())
        .unwrap();
    ensure!(r.return_value == Some(json!(4)), "home tabs {:?}", r.return_value);

    let suite = Suite::table2();
    let task = suite.tasks.iter().find(|t| t.id == "music-history").unwrap();
    let failing = run_task(task, scripted("listing2-fail"), &BenchOptions::default());
    ensure!(failing.verdict == TaskVerdict::Fail, "failing variant verdict {}", failing.verdict.as_str());
    let (s, _, _) = run_session("listing2-fail", "Show my listening history");
    let console = &s.iterations[0].result.as_ref().unwrap().console;
    ensure!(console.iter().any(|l| l == "[error] Play History tab not found."), "console {console:?}");
    Ok("route library/history; failing variant verdict fail".into())
}

fn bench_table2() -> Outcome {
    let t = Instant::now();
    let suite = Suite::table2();
    let opts = BenchOptions::default();
    let a = run_benchmark(&suite, scripted("table2"), &opts);
    let b = run_benchmark(&suite, scripted("table2"), &opts);
    let took = t.elapsed();
    ensure!(a.rate == "10/10", "rate {}\n{}", a.rate, a.render_table());
    ensure!(a.verdicts() == b.verdicts(), "two runs differ");
    ensure!(took < Duration::from_secs(10), "took {took:?}");

    let dir = tempfile::tempdir().unwrap();
    let mixed = BenchOptions { provider_name: "mixed".into(), ..Default::default() };
    let rec = run_benchmark(
        &suite,
        Arc::new(CassetteProvider::record(Cassette::new(dir.path()), scripted("mixed"))),
        &mixed,
    );
    let rep = run_benchmark(&suite, Arc::new(CassetteProvider::replay(Cassette::new(dir.path()))), &mixed);
    ensure!(rec.verdicts() == rep.verdicts(), "replay differs from recording");
    for v in [TaskVerdict::Pass, TaskVerdict::Fail, TaskVerdict::SalientFail, TaskVerdict::NotPossible] {
        ensure!(rep.count(v) > 0, "replayed run has no {} verdict", v.as_str());
    }
    Ok(format!("10/10 twice in {} ms; cassette replay {} matches recording", took.as_millis(), rep.rate))
}

const STATEMENTS: [&str; 12] = [
    "app.player.volume = N / 100",
    "app.player.next()",
    "app.player.previous()",
    "app.editor.fontSize = 8 + N % 30",
    "app.editor.openTab('fN', ['pN', 'qN'])",
    "app.editor.activeDocument.paragraphs.push('xN')",
    "app.ui.navigate('library/favorites')",
    "app.library.search('qN')",
    "for (let i = 0; i < N % 5; i++) app.player.next()",
    "if (app.player.volume > 0.5) { app.player.volume = 0.1 }",
    "app.ui.find('tab')[0].click()",
    "if (N % 3 == 0) throw new Error('stop N')",
];

fn random_script(rng: &mut TestRng) -> String {
    let n = rng.random_range(1..7);
    (0..n)
        .map(|_| {
            let k: u32 = rng.random_range(0..1000);
            STATEMENTS[rng.random_range(0..STATEMENTS.len())].replace('N', &k.to_string())
        })
        .collect::<Vec<_>>()
        .join(";\n")
}

fn rollback_identity() -> Outcome {
    let t = Instant::now();
    let mut rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    let store = Store::in_memory();
    let mut ok = 0;
    let mut mutated = 0;
    for i in 0..100 {
        let fixture = ["default", "multi-tab", "empty-editor"][i % 3];
        let before = init_fixture(fixture).unwrap();
        let snap = store.take_snapshot(&before, "acceptance", i as u32).map_err(|e| e.to_string())?;
        let mut state = before.clone();
        for _ in 0..rng.random_range(1..4) {
            state = execute(&ActionCode::js(random_script(&mut rng)), &state, &ResourceLimits::default(), Guard::permissive())
                .unwrap()
                .0;
        }
        if state != before {
            mutated += 1;
        }
        let back = store.rollback(snap, &state).map_err(|e| e.to_string())?;
        if back == before && back.hash() == before.hash() {
            ok += 1;
        }
    }
    let took = t.elapsed();
    ensure!(ok == 100, "{ok}/100 restored");
    ensure!(mutated > 50, "only {mutated} scripts changed state");
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    Ok(format!("100/100 restored ({mutated} changed state) in {} ms", took.as_millis()))
}

fn corpus(kind: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/safety").join(kind);
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "js"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn safety_corpus() -> Outcome {
    let rules = Arc::new(RuleSet::shipped());
    let before = init_fixture("default").unwrap();
    let run = |src: &str| {
        execute(&ActionCode::js(src), &before, &ResourceLimits::default(), Guard::new(rules.clone(), false)).unwrap()
    };
    let violating = corpus("violating");
    let compliant = corpus("compliant");
    ensure!(violating.len() == 20 && compliant.len() == 20, "corpus sizes {} / {}", violating.len(), compliant.len());
    let mut blocked = 0;
    for (name, src) in &violating {
        let statically = analyze(src, &rules).map_err(|e| format!("{name}: {e}"))?.decision != Decision::Allow;
        let (after, r) = run(src);
        let at_runtime = r.status == ExecStatus::Denied && after == before && r.state_diff.is_empty();
        ensure!(statically && at_runtime, "{name}: static {statically}, runtime {at_runtime}");
        blocked += 1;
    }
    let mut false_blocks = 0;
    for (name, src) in &compliant {
        let v = analyze(src, &rules).map_err(|e| format!("{name}: {e}"))?;
        let (_, r) = run(src);
        if v.decision != Decision::Allow || r.status != ExecStatus::Ok {
            false_blocks += 1;
        }
    }
    ensure!(false_blocks == 0, "{false_blocks}/20 compliant scripts blocked");
    Ok(format!("{blocked}/20 violations blocked on both routes with no mutation; 0/20 compliant blocked"))
}

fn runaway_loops() -> Outcome {
    let before = init_fixture("default").unwrap();
    let mut lines = Vec::new();
    for (src, limits) in [
        (
            "app.player.volume = 1; while (true) {}",
            ResourceLimits { wall_timeout_ms: 500, step_budget: u64::MAX, ..Default::default() },
        ),
        ("app.player.volume = 1; while (true) {}", ResourceLimits::default()),
        ("app.editor.fontSize = 30; let i = 0; while (i < 1e8) { i++; }", ResourceLimits::default()),
    ] {
        let t = Instant::now();
        let (after, r) = execute(&ActionCode::js(src), &before, &limits, Guard::permissive()).unwrap();
        let took = t.elapsed();
        ensure!(matches!(r.status, ExecStatus::Timeout | ExecStatus::ResourceExhausted), "{src}: {:?}", r.status);
        ensure!(took < Duration::from_millis(2 * limits.wall_timeout_ms), "{src}: took {took:?}");
        ensure!(after == before, "{src}: state changed");
        lines.push(format!("{} in {} ms", r.status.as_str(), took.as_millis()));
    }
    Ok(lines.join(", "))
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
        2 => format!("{prose}\n{canonical}\n{prose}"),
        _ => format!("{prose}\n```json\n{canonical}\n```\n{prose}"),
    }
}

fn protocol_round_trip() -> Outcome {
    let cases = Cell::new(0u32);
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 1000, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let strategy = (response_strategy(), 0u8..4, "[A-Za-z ,.:!?'()\\-]{0,60}");
    runner
        .run(&strategy, |(r, variant, prose)| {
            cases.set(cases.get() + 1);
            let canonical = r.to_json();
            let parsed = parse_response(&wrap(&canonical, variant, &prose))
                .map_err(|e| TestCaseError::fail(format!("{e}: {canonical}")))?;
            prop_assert_eq!(parsed, r);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    ensure!(cases.get() >= 1000, "only {} cases ran", cases.get());
    Ok(format!("{} cases (bare, fenced, prose, prose + fenced)", cases.get()))
}

struct Serve(Child, String);

impl Drop for Serve {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(data: &Path, script: &Path) -> Result<Serve, String> {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let child = Command::new(env!("CARGO_BIN_EXE_actagent"))
        .arg("--data-dir")
        .arg(data)
        .args(["serve", "--port", &port.to_string(), "--provider"])
        .arg(script)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let base = format!("http://127.0.0.1:{port}");
    let t = Instant::now();
    while reqwest::blocking::get(format!("{base}/state")).is_err() {
        ensure!(t.elapsed() < Duration::from_secs(10), "service did not start");
        std::thread::sleep(Duration::from_millis(20));
    }
    Ok(Serve(child, base))
}

fn crash_recovery() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let script: PathBuf = dir.path().join("script.json");
    let step = |code: &str, last: bool| json!({"thinking": "t", "action_code": format!("js:{code}"), "final_step": last});
    fs::write(
        &script,
        json!({"entries": [
            {"iteration": 1, "response": step("app.player.volume = 0.9; app.editor.fontSize = 22", false)},
            {"iteration": 2, "delay_ms": 60000, "response": step("app.player.next()", true)},
        ]})
        .to_string(),
    )
    .unwrap();
    let data = dir.path().join("data");
    let http = reqwest::blocking::Client::new();
    let get = |url: String| -> Result<Value, String> {
        http.get(url).send().and_then(|r| r.json()).map_err(|e| e.to_string())
    };

    let mut first = serve(&data, &script)?;
    let created: Value = http
        .post(format!("{}/sessions", first.1))
        .json(&json!({"instruction": "change a few things"}))
        .send()
        .and_then(|r| r.json())
        .map_err(|e| e.to_string())?;
    let id = created["id"].as_str().ok_or("no session id")?.to_string();
    let t = Instant::now();
    let audit_before = loop {
        let a = get(format!("{}/audit?session={id}", first.1))?;
        if a.as_array().is_some_and(|a| !a.is_empty()) {
            break a;
        }
        ensure!(t.elapsed() < Duration::from_secs(10), "first iteration never landed");
        std::thread::sleep(Duration::from_millis(20));
    };
    first.0.kill().map_err(|e| e.to_string())?;
    first.0.wait().map_err(|e| e.to_string())?;

    let second = serve(&data, &script)?;
    let s = get(format!("{}/sessions/{id}", second.1))?;
    ensure!(s["status"] == "failed", "status after restart {}", s["status"]);
    let audit_after = get(format!("{}/audit?session={id}", second.1))?;
    ensure!(audit_after == audit_before, "audit log changed across the crash");
    let store_audit = Store::open(&data).map_err(|e| e.to_string())?.query_audit(&AuditFilter::default()).len();
    ensure!(store_audit == audit_before.as_array().unwrap().len(), "audit file has {store_audit} entries");
    let pre = s["pre_session_snapshot"].as_u64().ok_or("no pre-session snapshot")?;
    let r = http
        .post(format!("{}/sessions/{id}/rollback", second.1))
        .json(&json!({"snapshot_id": pre}))
        .send()
        .map_err(|e| e.to_string())?;
    ensure!(r.status().is_success(), "rollback answered {}", r.status());
    let hash = get(format!("{}/state", second.1))?["hash"].as_str().unwrap_or_default().to_string();
    ensure!(hash == init_fixture("default").unwrap().hash(), "state hash after rollback differs from the fixture");
    Ok(format!("session failed on restart, {store_audit} audit entries intact, fixture hash restored"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("listing 1 converges in three iterations", listing_one),
        ("listing 2 reaches the history tab; failing variant fails", listing_two),
        ("bench table2 with the scripted provider", bench_table2),
        ("rollback identity over 100 random scripts", rollback_identity),
        ("safety corpus under the shipped rules", safety_corpus),
        ("runaway loops stop within twice the wall limit", runaway_loops),
        ("protocol round-trip", protocol_round_trip),
        ("crash recovery", crash_recovery),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {}. {name}: {e}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
