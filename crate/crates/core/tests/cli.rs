use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use actagent::host::init_fixture;
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_actagent");

fn cli(data: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--data-dir").arg(data).args(args).stdin(Stdio::null()).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bench_table2_scripted_passes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = cli(dir.path(), &["bench", "--suite", "table2", "--provider", "scripted", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("10/10 passed"), "{}", stdout(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["passed"], 10);
}

#[test]
fn failing_suite_exits_one_and_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["bench", "--provider", "always-na"]).status.code(), Some(1));
    assert_eq!(cli(dir.path(), &["bench", "--provider", "no-such-provider"]).status.code(), Some(2));
    assert_eq!(cli(dir.path(), &["bench", "--suite", "missing.toml"]).status.code(), Some(2));
    assert_eq!(cli(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(cli(dir.path(), &["rollback", "--snapshot", "42"]).status.code(), Some(2));
}

#[test]
fn bench_records_then_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cas = dir.path().join("cassette");
    let c = cas.to_str().unwrap();
    let rec = cli(dir.path(), &["bench", "--provider", "mixed", "--record", c]);
    let rep = cli(dir.path(), &["bench", "--provider", "mixed", "--replay", c]);
    assert_eq!(rec.status.code(), Some(1));
    assert_eq!(rep.status.code(), Some(1));
    let table = |o: &Output| stdout(o).lines().filter(|l| !l.contains(" ms")).collect::<Vec<_>>().join("\n");
    assert_eq!(table(&rec), table(&rep));
    assert!(stdout(&rep).contains("6/10 passed"), "{}", stdout(&rep));
}

#[test]
fn run_audit_rollback_and_gc() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["run", "--task", "Increase the volume slightly", "--provider", "listing1", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(s["status"], "succeeded");
    let id = s["id"].as_str().unwrap();

    let audit = stdout(&cli(dir.path(), &["audit", "--session", id]));
    assert_eq!(audit.lines().count(), 3);
    assert_eq!(stdout(&cli(dir.path(), &["audit"])).lines().count(), 3);

    let snap = s["pre_session_snapshot"].as_u64().unwrap().to_string();
    let o = cli(dir.path(), &["rollback", "--snapshot", &snap]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(&init_fixture("default").unwrap().hash()));
    let last: Value = serde_json::from_str(stdout(&cli(dir.path(), &["audit"])).lines().last().unwrap()).unwrap();
    assert_eq!(last["result_status"], "rolled_back");

    let o = cli(dir.path(), &["gc", "--keep-last", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("removed "));
}

#[test]
fn run_on_a_fixture_leaves_the_live_host_alone() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["run", "--task", "Show my listening history", "--provider", "listing2-fail", "--fixture", "default", "--max-iterations", "2"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("failed"), "{}", stdout(&o));
    assert!(!dir.path().join("host.json").exists());
    assert_eq!(stdout(&cli(dir.path(), &["audit"])).lines().count(), 2);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Serve {
    child: Child,
    base: String,
}

impl Drop for Serve {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn serve(data: &Path, script: &Path) -> Serve {
    let port = free_port();
    let child = Command::new(BIN)
        .arg("--data-dir")
        .arg(data)
        .args(["serve", "--port", &port.to_string(), "--provider", script.to_str().unwrap()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let base = format!("http://127.0.0.1:{port}");
    let t = Instant::now();
    while reqwest::blocking::get(format!("{base}/state")).is_err() {
        assert!(t.elapsed() < Duration::from_secs(10), "service did not start");
        std::thread::sleep(Duration::from_millis(20));
    }
    Serve { child, base }
}

#[test]
fn killed_service_recovers_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    let step = |code: &str, last: bool| json!({"thinking": "t", "action_code": format!("js:{code}"), "final_step": last});
    std::fs::write(
        &script,
        json!({"entries": [
            {"iteration": 1, "response": step("app.player.volume = 0.9", false)},
            {"iteration": 2, "delay_ms": 60000, "response": step("app.player.next()", true)},
        ]})
        .to_string(),
    )
    .unwrap();
    let data = dir.path().join("data");
    let http = reqwest::blocking::Client::new();

    let mut first = serve(&data, &script);
    let id = http.post(format!("{}/sessions", first.base)).json(&json!({"instruction": "go"})).send().unwrap();
    let id = id.json::<Value>().unwrap()["id"].as_str().unwrap().to_string();
    let t = Instant::now();
    let audit_before = loop {
        let a: Value = http.get(format!("{}/audit?session={id}", first.base)).send().unwrap().json().unwrap();
        if !a.as_array().unwrap().is_empty() {
            break a;
        }
        assert!(t.elapsed() < Duration::from_secs(10));
        std::thread::sleep(Duration::from_millis(20));
    };
    first.child.kill().unwrap();
    first.child.wait().unwrap();

    let second = serve(&data, &script);
    let s: Value = http.get(format!("{}/sessions/{id}", second.base)).send().unwrap().json().unwrap();
    assert_eq!(s["status"], "failed", "{s}");
    let audit: Value = http.get(format!("{}/audit?session={id}", second.base)).send().unwrap().json().unwrap();
    assert_eq!(audit, audit_before);
    let state: Value = http.get(format!("{}/state", second.base)).send().unwrap().json().unwrap();
    assert_eq!(state["state"]["player"]["volume"], 0.9);
    let r = http.post(format!("{}/sessions/{id}/rollback", second.base)).json(&json!({})).send().unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let state: Value = http.get(format!("{}/state", second.base)).send().unwrap().json().unwrap();
    assert_eq!(state["hash"], init_fixture("default").unwrap().hash());
}

#[test]
fn config_file_names_providers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/scripts/table2.json");
    std::fs::write(
        &cfg,
        format!("max_iterations = 4\n[providers.mine]\nkind = \"scripted\"\nscript = {:?}\n", script.to_str().unwrap()),
    )
    .unwrap();
    let o = cli(dir.path(), &["--config", cfg.to_str().unwrap(), "bench", "--provider", "mine"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("10/10 passed"));

    std::fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    assert_eq!(cli(dir.path(), &["--config", cfg.to_str().unwrap(), "audit"]).status.code(), Some(2));
}

#[test]
fn shipped_example_config_parses() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .current_dir(root)
        .args(["--data-dir", dir.path().to_str().unwrap(), "--config", "actagent.example.toml", "bench", "--provider", "canned"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}
