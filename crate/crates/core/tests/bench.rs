use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use actagent::bench::{
    golden_hash, run_benchmark, BenchOptions, BenchReport, Oracle, OracleError, OraclePathError, Suite,
    SuiteSyntaxError, TaskResult, TaskVerdict,
};
use actagent::host::init_fixture;
use actagent::llm::{builtin_script, Cassette, CassetteProvider, Provider, ScriptedProvider};
use proptest::prelude::*;

fn scripted(name: &str) -> Arc<dyn Provider> {
    Arc::new(ScriptedProvider::new(builtin_script(name).unwrap()))
}

fn opts(name: &str) -> BenchOptions {
    BenchOptions { provider_name: name.into(), ..Default::default() }
}

#[test]
fn table2_with_the_oracle_script_passes_everything() {
    let t = Instant::now();
    let suite = Suite::table2();
    let a = run_benchmark(&suite, scripted("table2"), &opts("scripted"));
    let b = run_benchmark(&suite, scripted("table2"), &opts("scripted"));
    assert!(t.elapsed().as_secs() < 10, "{:?}", t.elapsed());
    assert_eq!(a.rate, "10/10", "{}", a.render_table());
    assert_eq!(a.verdicts(), b.verdicts());
    let strip = |r: &BenchReport| r.results.iter().map(|x| (x.id.clone(), x.iterations, x.llm_calls)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert!(a.results.iter().all(|r| r.isolated));
    let volume = a.results.iter().find(|r| r.id == "music-volume").unwrap();
    assert_eq!(volume.iterations, 3);
    let excerpt = a.results.iter().find(|r| r.id == "editor-excerpt-tab").unwrap();
    assert_eq!(excerpt.iterations, 2);
}

#[test]
fn always_na_scores_zero() {
    let r = run_benchmark(&Suite::table2(), scripted("always-na"), &opts("always-na"));
    assert_eq!(r.rate, "0/10");
    assert_eq!(r.count(TaskVerdict::NotPossible), 10);
    assert!(r.results.iter().all(|x| x.isolated));
}

const MIXED_EXPECTED: [(&str, TaskVerdict); 10] = [
    ("music-favorites", TaskVerdict::Pass),
    ("music-history", TaskVerdict::Fail),
    ("music-search", TaskVerdict::Pass),
    ("music-volume", TaskVerdict::Pass),
    ("music-next", TaskVerdict::Pass),
    ("editor-bold", TaskVerdict::SalientFail),
    ("editor-font", TaskVerdict::SalientFail),
    ("editor-new-tab", TaskVerdict::Pass),
    ("editor-close-others", TaskVerdict::Pass),
    ("editor-excerpt-tab", TaskVerdict::NotPossible),
];

fn expected() -> Vec<(String, TaskVerdict)> {
    MIXED_EXPECTED.iter().map(|(i, v)| (i.to_string(), *v)).collect()
}

#[test]
fn mixed_outcomes_are_classified() {
    let r = run_benchmark(&Suite::table2(), scripted("mixed"), &opts("mixed"));
    assert_eq!(r.verdicts(), expected(), "{}", r.render_table());
    assert_eq!(r.rate, "6/10");
    assert!(r.results.iter().all(|x| x.isolated), "{:#?}", r.results);
    let table = r.render_table();
    assert!(table.contains("X (salient)") && table.contains("N/A") && table.contains("✓ (*)"));
    assert!(table.trim_end().ends_with("6/10"));
}

#[test]
fn parallel_runs_match_serial_runs() {
    let suite = Suite::table2();
    let serial = run_benchmark(&suite, scripted("mixed"), &opts("mixed"));
    let parallel = run_benchmark(&suite, scripted("mixed"), &BenchOptions { parallelism: 4, ..opts("mixed") });
    assert_eq!(serial.verdicts(), parallel.verdicts());
}

#[test]
fn recorded_cassettes_replay_the_same_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let suite = Suite::table2();
    let rec = Arc::new(CassetteProvider::record(Cassette::new(dir.path()), scripted("mixed")));
    let live = run_benchmark(&suite, rec, &opts("mixed"));
    let replay = Arc::new(CassetteProvider::replay(Cassette::new(dir.path())));
    let again = run_benchmark(&suite, replay, &opts("mixed"));
    assert_eq!(live.verdicts(), again.verdicts());
}

#[test]
fn shipped_cassette_replays_frozen_verdicts() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("cassettes/mixed");
    if std::env::var_os("ACTAGENT_BLESS").is_some() {
        let _ = std::fs::remove_dir_all(&dir);
        let rec = Arc::new(CassetteProvider::record(Cassette::new(&dir), scripted("mixed")));
        run_benchmark(&Suite::table2(), rec, &opts("mixed"));
    }
    let replay = Arc::new(CassetteProvider::replay(Cassette::new(&dir)));
    let r = run_benchmark(&Suite::table2(), replay, &opts("mixed"));
    assert_eq!(r.verdicts(), expected(), "{}", r.render_table());
    assert_eq!(r.count(TaskVerdict::Error), 0);
}

#[test]
fn replay_misses_become_error_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let replay = Arc::new(CassetteProvider::replay(Cassette::new(dir.path())));
    let r = run_benchmark(&Suite::table2(), replay, &opts("empty"));
    assert_eq!(r.count(TaskVerdict::Error), 10);
    assert!(r.results[0].detail.as_ref().unwrap().contains("cassette"));
    assert!(r.results.iter().all(|x| x.isolated));
}

#[test]
fn golden_hashes_match_fresh_fixtures() {
    for name in ["default", "empty-editor", "multi-tab"] {
        assert_eq!(golden_hash(name).unwrap(), init_fixture(name).unwrap().hash());
    }
    assert_eq!(golden_hash("nope"), None);
}

fn oracle_of(id: &str) -> Oracle {
    Suite::table2().tasks.into_iter().find(|t| t.id == id).unwrap().oracle
}

#[test]
fn font_oracle() {
    let o = oracle_of("editor-font");
    let s0 = init_fixture("default").unwrap();
    let mut s1 = s0.clone();
    s1.documents.values_mut().next().unwrap().font_size = 16;
    assert_eq!(s0.active_document().font_size, 14);
    assert!(o.evaluate(&s0, &s1, &[]).unwrap());
    s1.documents.values_mut().next().unwrap().font_size = 15;
    assert!(!o.evaluate(&s0, &s1, &[]).unwrap());
}

#[test]
fn history_oracle_rejects_the_library_page() {
    let o = oracle_of("music-history");
    let s0 = init_fixture("default").unwrap();
    let mut s1 = s0.clone();
    s1.current_route = "library".into();
    assert!(!o.evaluate(&s0, &s1, &[]).unwrap());
    s1.current_route = "library/history".into();
    assert!(o.evaluate(&s0, &s1, &[]).unwrap());
}

#[test]
fn volume_oracle_bounds() {
    let o = oracle_of("music-volume");
    let s0 = init_fixture("default").unwrap();
    let at = |v0: f64, v1: f64| {
        let (mut a, mut b) = (s0.clone(), s0.clone());
        a.player.volume = v0;
        b.player.volume = v1;
        o.evaluate(&a, &b, &[]).unwrap()
    };
    assert!(at(0.5, 0.6));
    assert!(at(0.5, 0.7));
    assert!(!at(0.5, 0.71));
    assert!(!at(0.5, 0.5));
    assert!(!at(0.5, 0.4));
    assert!(at(0.9, 1.0));
    assert!(at(0.85, 1.0));
    assert!(!at(0.7, 1.0));
}

#[test]
fn new_tab_oracle() {
    let o = oracle_of("editor-new-tab");
    let s0 = init_fixture("default").unwrap();
    let mut s1 = init_fixture("multi-tab").unwrap();
    s1.editor.tabs.truncate(2);
    s1.editor.active_tab = s1.editor.tabs[1].id.clone();
    assert_eq!(s0.editor.tabs.len(), 1);
    assert!(o.evaluate(&s0, &s1, &[]).unwrap());
    s1.editor.active_tab = s0.editor.active_tab.clone();
    assert!(!o.evaluate(&s0, &s1, &[]).unwrap());
}

#[test]
fn oracle_language() {
    let s = init_fixture("default").unwrap();
    let t = |src: &str| Oracle::parse(src).unwrap().evaluate(&s, &s, &["hello world".to_string()]).unwrap();
    assert!(t("1 + 2 == 3 && 0.1 + 0.2 == 0.3"));
    assert!(t("!(1 > 2) || false"));
    assert!(t("-1 < 0 && abs(-2) == 2"));
    assert!(t("console contains \"world\" && \"abc\" contains 'b'"));
    assert!(t("player.favorites contains \"t01\""));
    assert!(t("len(take(active_document.paragraphs, 2)) == 2 && len(current_route) == 4"));
    assert!(t("lower('AbC') == 'abc' && last(editor.tabs) == active_tab && len(player.history) == 5"));
    assert!(t("editor.tabs.0.id == active_tab.id && current_track.title != null"));
    assert!(t("initial.player.volume == player.volume"));
    assert!(t("null == null && true != false"));
}

#[test]
fn oracle_errors() {
    let s = init_fixture("default").unwrap();
    let eval = |src: &str| Oracle::parse(src).unwrap().evaluate(&s, &s, &[]);
    assert_eq!(eval("player.loudness == 1"), Err(OracleError::Path(OraclePathError("player.loudness".into()))));
    assert_eq!(eval("editor.tabs.7.id == 1"), Err(OracleError::Path(OraclePathError("editor.tabs.7.id".into()))));
    assert!(matches!(eval("player.volume"), Err(OracleError::Type(_))));
    assert!(matches!(eval("current_route + 1 == 2"), Err(OracleError::Type(_))));
    for bad in ["", "1 +", "(1 == 1", "foo == 1", "len(1, 2) == 1", "nope(1)", "1 == 1 1", "'open", "a # b"] {
        assert!(matches!(Oracle::parse(bad), Err(OracleError::Syntax { .. })), "{bad}");
    }
    let o = Oracle::parse("player.loudness == 1").unwrap();
    assert_eq!(o.check_paths(&s), Err(OraclePathError("player.loudness".into())));
    assert_eq!(o.paths(), vec!["player.loudness"]);
}

#[test]
fn suites_round_trip_and_reject_bad_input() {
    let suite = Suite::table2();
    assert_eq!(suite.tasks.len(), 10);
    assert_eq!(suite.tasks[2].instruction, "Search for \"Hotel California\"");
    assert_eq!(Suite::parse(&suite.render()).unwrap(), suite);
    assert_eq!(Suite::load("table2").unwrap(), suite);

    let block = |id: &str, fixture: &str, oracle: &str| {
        format!("[[task]]\nid = \"{id}\"\ninstruction = \"x\"\nfixture = \"{fixture}\"\noracle = '{oracle}'\n")
    };
    let ok = block("a", "default", "current_route == \"home\"");
    assert!(Suite::parse(&format!("name = \"s\"\n{ok}")).is_ok());
    assert_eq!(Suite::parse("name = \"s\"\ntask = []"), Err(SuiteSyntaxError::Empty));
    assert_eq!(
        Suite::parse(&format!("name = \"s\"\n{ok}{ok}")),
        Err(SuiteSyntaxError::DuplicateId("a".into()))
    );
    assert!(matches!(
        Suite::parse(&format!("name = \"s\"\n{}", block("b", "nowhere", "true"))),
        Err(SuiteSyntaxError::Fixture { .. })
    ));
    assert!(matches!(
        Suite::parse(&format!("name = \"s\"\n{}", block("b", "default", "editor.font == 1"))),
        Err(SuiteSyntaxError::OraclePath { .. })
    ));
    assert!(matches!(Suite::parse(&format!("name = \"s\"\n{}", block("b", "default", "=="))), Err(SuiteSyntaxError::Format(_))));
    assert!(matches!(Suite::parse("name = "), Err(SuiteSyntaxError::Format(_))));
    assert!(matches!(Suite::load("/no/such/suite.toml"), Err(SuiteSyntaxError::Format(_))));
}

fn verdict() -> impl Strategy<Value = TaskVerdict> {
    prop_oneof![
        Just(TaskVerdict::Pass),
        Just(TaskVerdict::Fail),
        Just(TaskVerdict::SalientFail),
        Just(TaskVerdict::NotPossible),
        Just(TaskVerdict::Error),
    ]
}

proptest! {
    #[test]
    fn report_rate_recounts_the_verdicts(vs in proptest::collection::vec(verdict(), 0..20)) {
        let results: Vec<TaskResult> = vs.iter().enumerate().map(|(i, v)| TaskResult {
            id: format!("t{i}"), group: None, instruction: "x".into(), verdict: *v, iterations: 1, llm_calls: 1,
            duration_ms: 0, session_status: None, detail: None, isolated: true,
        }).collect();
        let r = BenchReport::new("s", "p", results, 0);
        let n = vs.iter().filter(|v| **v == TaskVerdict::Pass).count();
        prop_assert_eq!(r.rate.clone(), format!("{}/{}", n, vs.len()));
        prop_assert_eq!(r.all_passed(), n == vs.len());
        let back: BenchReport = serde_json::from_str(&r.to_json()).unwrap();
        prop_assert_eq!(back, r);
    }
}
