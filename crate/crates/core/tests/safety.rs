use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use actagent::host::{init_fixture, BridgeCall};
use actagent::sandbox::{execute, ActionCode, ExecStatus, ResourceLimits};
use actagent::safety::{
    analyze, guard_check, load_rules, AccessKind, Decision, DefaultDecision, Exact, Guard,
    GuardDecision, RuleKind, RuleSet, SafetyRule,
};
use proptest::prelude::*;
use serde_json::json;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/safety")
}

fn policy() -> RuleSet {
    RuleSet::shipped()
}

fn scripts(kind: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(corpus_dir().join(kind))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "js"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn load_rules_parses_every_form() {
    let set = load_rules(
        "# c\n\ndefault deny\nwrite_threshold 2\ndeny_global fetch \"no \\\"net\\\"\"\n\
         allowlist_mode app.player app.ui \"player only\"\nrequire_approval app.editor.* # trailing\n",
    )
    .unwrap();
    assert_eq!(set.default, DefaultDecision::Deny);
    assert_eq!(set.write_threshold, Some(2));
    assert_eq!(set.rules.len(), 3);
    assert_eq!(set.rules[0].reason, "no \"net\"");
    assert_eq!(set.rules[0].line, 5);
    assert_eq!(set.rules[1].kind, RuleKind::AllowlistMode);
    assert_eq!(set.rules[1].patterns, vec!["app.player", "app.ui"]);
    assert_eq!(set.rules[2].reason, "require_approval app.editor.*");
    assert_eq!(load_rules(&set.render()).unwrap().render(), set.render());
}

#[test]
fn load_rules_rejects_malformed_lines() {
    for (text, line) in [
        ("deny_everything x", 1),
        ("default maybe", 1),
        ("\nwrite_threshold 0", 2),
        ("deny_call a b", 1),
        ("deny_call", 1),
        ("deny_call x \"open", 1),
        ("deny_call x \"r\" extra", 1),
        ("deny_call [ \"bad glob\"", 1),
    ] {
        let e = load_rules(text).unwrap_err();
        assert_eq!(e.line, line, "{text}");
    }
}

#[test]
fn shipped_rules_load() {
    let s = RuleSet::shipped();
    assert_eq!(s.write_threshold, Some(3));
    assert!(s.rules.iter().any(|r| r.kind == RuleKind::RequireApproval));
    let v = RuleSet::verification();
    assert!(matches!(v.evaluate("app.player.volume", AccessKind::Write), Exact::Deny(_)));
    assert_eq!(v.evaluate("app.player.volume", AccessKind::Read), Exact::Allow);
}

#[test]
fn global_fetch_is_denied_at_its_position() {
    let v = analyze("fetch(\"https://x\")", &RuleSet::shipped()).unwrap();
    assert_eq!(v.decision, Decision::Deny);
    assert_eq!(v.reasons[0].location(), "1:1");
    assert_eq!(v.reasons[0].site, "global fetch");
}

#[test]
fn locally_declared_name_is_not_a_global() {
    let v = analyze("const fetch = x => x; fetch(1)", &RuleSet::shipped()).unwrap();
    assert_eq!(v.decision, Decision::Allow);
}

#[test]
fn deny_write_that_does_not_match_allows() {
    let rules = load_rules("deny_write app.library.* \"ro\"").unwrap();
    let v = analyze("app.player.volume = 0.3", &rules).unwrap();
    assert_eq!(v, actagent::safety::Verdict::allow());
}

#[test]
fn close_other_tabs_needs_approval_under_shipped_rules() {
    let v = analyze("app.editor.closeOtherTabs()", &RuleSet::shipped()).unwrap();
    assert_eq!(v.decision, Decision::NeedsApproval);
    assert_eq!(v.reasons[0].site, "call app.editor.closeOtherTabs");
}

#[test]
fn aliasing_through_logical_fallbacks_is_followed() {
    let rules = load_rules("deny_write app.player.volume \"fixed volume\"").unwrap();
    let src = "const player = app.musicPlayer || (app.$store && app.$store.state.player) || app.player;\n\
               player.volume = 0.6;";
    let v = analyze(src, &rules).unwrap();
    assert_eq!(v.decision, Decision::Deny);
    assert_eq!(v.reasons[0].location(), "2:1");
}

#[test]
fn ui_handles_resolve_to_click() {
    let rules = load_rules("deny_call app.ui.click \"no clicking\"").unwrap();
    for src in [
        "app.ui.find('tab')[5].click()",
        "const tabs = app.ui.find('tab'); tabs[5].click();",
        "app.ui.find('tab').forEach(t => t.click())",
        "for (const t of app.ui.find('tab')) { t.click(); }",
        "const t = app.ui.find('tab').find(t => t.label === 'X'); t.click();",
    ] {
        assert_eq!(analyze(src, &rules).unwrap().decision, Decision::Deny, "{src}");
    }
}

#[test]
fn computed_access_near_a_rule_needs_approval() {
    let rules = load_rules("deny_call app.editor.closeOtherTabs \"no\"").unwrap();
    let v = analyze("const k = 'close' + 'OtherTabs'; app.editor[k]()", &rules).unwrap();
    assert_eq!(v.decision, Decision::NeedsApproval);
    let v = analyze("const k = 'next'; app.player[k]()", &rules).unwrap();
    assert_eq!(v.decision, Decision::Allow);
}

#[test]
fn write_threshold_counts_distinct_targets() {
    let rules = load_rules("write_threshold 3").unwrap();
    let two = "app.player.volume = 0.1; app.player.volume = 0.2; app.editor.fontSize = 12;";
    assert_eq!(analyze(two, &rules).unwrap().decision, Decision::Allow);
    let three = "app.player.volume = 0.1; app.editor.fontSize = 12; app.player.next();";
    let v = analyze(three, &rules).unwrap();
    assert_eq!(v.decision, Decision::NeedsApproval);
    assert_eq!(v.reasons[0].site, "write threshold");
}

#[test]
fn syntax_errors_are_reported() {
    assert!(analyze("let = ;", &RuleSet::shipped()).is_err());
}

#[test]
fn allowlist_mode_permits_ancestors_for_reads_only() {
    let rules = load_rules("allowlist_mode app.player \"player only\"").unwrap();
    assert_eq!(rules.evaluate("app", AccessKind::Read), Exact::Allow);
    assert_eq!(rules.evaluate("app.player.volume", AccessKind::Write), Exact::Allow);
    assert!(matches!(rules.evaluate("app.editor.fontSize", AccessKind::Read), Exact::Deny(_)));
    assert_eq!(analyze("app.player.volume = 1", &rules).unwrap().decision, Decision::Allow);
    assert_eq!(analyze("app.editor.fontSize = 9", &rules).unwrap().decision, Decision::Deny);
}

#[test]
fn guard_check_respects_approval() {
    let rules = RuleSet::shipped();
    let call = BridgeCall::invoke("app.editor.closeOtherTabs", vec![]);
    assert!(matches!(guard_check(&call, &rules, false), GuardDecision::Deny(r) if r.contains("approval required")));
    assert_eq!(guard_check(&call, &rules, true), GuardDecision::Allow);
    assert_eq!(guard_check(&BridgeCall::get("app.editor.tabs"), &rules, false), GuardDecision::Allow);
}

#[test]
fn guard_threshold_counts_distinct_paths() {
    let mut g = Guard::new(Arc::new(load_rules("write_threshold 2").unwrap()), false);
    assert_eq!(g.check(&BridgeCall::set("app.player.volume", json!(0.1))), GuardDecision::Allow);
    assert_eq!(g.check(&BridgeCall::set("app.player.volume", json!(0.2))), GuardDecision::Allow);
    assert_eq!(g.check(&BridgeCall::get("app.editor.fontSize")), GuardDecision::Allow);
    assert!(matches!(g.check(&BridgeCall::set("app.editor.fontSize", json!(9))), GuardDecision::Deny(_)));
    assert!(matches!(g.check_global("fetch"), GuardDecision::Allow));
    let shipped = Guard::new(Arc::new(RuleSet::shipped()), false);
    assert!(matches!(shipped.check_global("fetch"), GuardDecision::Deny(_)));
}

fn run_guarded(src: &str, rules: &RuleSet) -> (actagent::host::HostState, actagent::sandbox::ExecutionResult) {
    let state = init_fixture("default").unwrap();
    let guard = Guard::new(Arc::new(rules.clone()), false);
    execute(&ActionCode::js(src), &state, &ResourceLimits::default(), guard).unwrap()
}

#[test]
fn corpus_violations_are_blocked_statically() {
    let rules = policy();
    let vs = scripts("violating");
    assert_eq!(vs.len(), 20);
    for (name, src) in vs {
        let v = analyze(&src, &rules).unwrap();
        assert_ne!(v.decision, Decision::Allow, "{name} passed static analysis");
    }
}

#[test]
fn corpus_violations_are_blocked_at_runtime_without_mutation() {
    let rules = policy();
    let before = init_fixture("default").unwrap();
    for (name, src) in scripts("violating") {
        let (after, r) = run_guarded(&src, &rules);
        assert_eq!(r.status, ExecStatus::Denied, "{name}: {:?}", r.error);
        assert_eq!(after, before, "{name} mutated state");
        assert!(r.state_diff.is_empty(), "{name}");
    }
}

#[test]
fn corpus_compliant_scripts_are_allowed_on_both_routes() {
    let rules = policy();
    let cs = scripts("compliant");
    assert_eq!(cs.len(), 20);
    for (name, src) in cs {
        let v = analyze(&src, &rules).unwrap();
        assert_eq!(v.decision, Decision::Allow, "{name}: {}", v.summary());
        let (_, r) = run_guarded(&src, &rules);
        assert_eq!(r.status, ExecStatus::Ok, "{name}: {:?}", r.error);
    }
}

const PATHS: [&str; 8] = [
    "app.player.volume",
    "app.player.next",
    "app.library.search",
    "app.editor.fontSize",
    "app.editor.closeOtherTabs",
    "app.editor.activeDocument.paragraphs",
    "app.ui.navigate",
    "app.ui.click",
];

fn rule_strategy() -> impl Strategy<Value = SafetyRule> {
    let kinds = prop_oneof![
        Just(RuleKind::DenyCall),
        Just(RuleKind::DenyWrite),
        Just(RuleKind::RequireApproval),
    ];
    let pats = prop_oneof![
        proptest::sample::select(PATHS.to_vec()).prop_map(String::from),
        Just("app.player.*".to_string()),
        Just("app.editor.*".to_string()),
        Just("app.*".to_string()),
        Just("app.ui.n*".to_string()),
    ];
    (kinds, pats).prop_map(|(k, p)| SafetyRule::new(k, &[&p], "r").unwrap())
}

fn access_strategy() -> impl Strategy<Value = AccessKind> {
    prop_oneof![Just(AccessKind::Read), Just(AccessKind::Write), Just(AccessKind::Invoke)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Rules after the first match never change the outcome.
    #[test]
    fn first_match_wins(
        rules in proptest::collection::vec(rule_strategy(), 1..5),
        extra in proptest::collection::vec(rule_strategy(), 0..4),
        path in proptest::sample::select(PATHS.to_vec()),
        kind in access_strategy(),
    ) {
        let base = RuleSet { rules: rules.clone(), ..RuleSet::default() };
        let before = base.evaluate(path, kind);
        prop_assume!(before != Exact::Allow);
        let mut longer = base.clone();
        longer.rules.extend(extra);
        prop_assert_eq!(longer.evaluate(path, kind), before);
    }

    /// Placing a matching deny rule first denies the access whatever follows.
    #[test]
    fn leading_deny_dominates(
        rules in proptest::collection::vec(rule_strategy(), 0..5),
        path in proptest::sample::select(PATHS.to_vec()),
    ) {
        let mut set = RuleSet { rules, ..RuleSet::default() };
        set.rules.insert(0, SafetyRule::new(RuleKind::DenyWrite, &[path], "first").unwrap());
        prop_assert_eq!(set.evaluate(path, AccessKind::Write), Exact::Deny("first".into()));
    }
}

/// Statement templates for generated action code; `{i}` is a fresh index.
const TEMPLATES: [&str; 16] = [
    "app.player.volume = 0.25;",
    "const p{i} = app.musicPlayer || app.player; p{i}.volume = 0.75;",
    "app.player.next();",
    "const { player: q{i} } = app; q{i}.next();",
    "app.editor.fontSize = 18;",
    "const e{i} = app.editor; e{i}.fontSize += 1;",
    "app.editor.openTab('t{i}', []);",
    "app.editor.activeDocument.paragraphs.push('x{i}');",
    "const d{i} = app.editor.activeDocument; d{i}.paragraphs = ['y'];",
    "app.ui.navigate('library');",
    "app.ui.find('tab')[0].click();",
    "const k{i} = 'nav' + 'igate'; app.ui[k{i}]('editor');",
    "function f{i}(o) { o.volume = 0.1; } f{i}(app.player);",
    "console.log(app.ui.currentRoute);",
    "app.library.favorites().length;",
    "[1, 2].forEach(n => { app.editor.fontSize = 10 + n; });",
];

const POLICIES: [&str; 6] = [
    "deny_write app.player.* \"p\"",
    "deny_call app.ui.* \"u\"",
    "deny_write app.editor.activeDocument.* \"d\"",
    "require_approval app.editor.* \"e\"",
    "write_threshold 2",
    "allowlist_mode app.player app.library \"a\"",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Whatever the runtime guard blocks, the static analysis flags: the
    /// static route over-approximates the dynamic one.
    #[test]
    fn static_analysis_covers_runtime_denials(
        picks in proptest::collection::vec(0..TEMPLATES.len(), 1..5),
        policy in proptest::sample::select(POLICIES.to_vec()),
    ) {
        let src: String = picks
            .iter()
            .enumerate()
            .map(|(i, &t)| TEMPLATES[t].replace("{i}", &i.to_string()))
            .collect::<Vec<_>>()
            .join("\n");
        let rules = load_rules(policy).unwrap();
        let (_, r) = run_guarded(&src, &rules);
        let v = analyze(&src, &rules).unwrap();
        if r.status == ExecStatus::Denied {
            prop_assert_ne!(v.decision, Decision::Allow, "runtime denied {:?} but static allowed:\n{}", r.error, src);
        }
    }
}
