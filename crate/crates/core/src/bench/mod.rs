//! The benchmark harness: runs a task suite against a provider, lets each
//! task's oracle decide the outcome, and reports a completion rate.

mod oracle;
mod suite;

use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{state_view, Oracle, OracleError, OraclePathError};
pub use suite::{Suite, SuiteSyntaxError, TaskSpec, TABLE2_SUITE};

use crate::agent::{Agent, AgentAction, AgentConfig, AgentResponse, ApprovalPolicy, Session, SessionStatus, VerificationMode};
use crate::host::{init_fixture, FixtureFile, HostState};
use crate::llm::Provider;
use crate::store::Store;

const GOLDEN: [(&str, &str); 3] = [
    ("default", include_str!("../../fixtures/default.json")),
    ("empty-editor", include_str!("../../fixtures/empty-editor.json")),
    ("multi-tab", include_str!("../../fixtures/multi-tab.json")),
];

/// Hash of the frozen fixture file, if `name` is a shipped fixture.
pub fn golden_hash(name: &str) -> Option<String> {
    let (_, text) = GOLDEN.iter().find(|(n, _)| *n == name)?;
    Some(FixtureFile::parse(text).ok()?.state.hash())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskVerdict {
    Pass,
    Fail,
    /// Claimed done with a clean run, but the oracle disagrees.
    SalientFail,
    NotPossible,
    Error,
}

impl TaskVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskVerdict::Pass => "pass",
            TaskVerdict::Fail => "fail",
            TaskVerdict::SalientFail => "salient_fail",
            TaskVerdict::NotPossible => "not_possible",
            TaskVerdict::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub id: String,
    pub group: Option<String>,
    pub instruction: String,
    pub verdict: TaskVerdict,
    pub iterations: usize,
    pub llm_calls: u32,
    pub duration_ms: u64,
    pub session_status: Option<SessionStatus>,
    pub detail: Option<String>,
    /// The task started from the golden fixture and, unless it passed,
    /// ended there again.
    pub isolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite: String,
    pub provider: String,
    pub results: Vec<TaskResult>,
    pub passed: usize,
    pub total: usize,
    /// "passed/total".
    pub rate: String,
    pub duration_ms: u64,
}

impl BenchReport {
    pub fn new(suite: &str, provider: &str, results: Vec<TaskResult>, duration_ms: u64) -> BenchReport {
        let passed = results.iter().filter(|r| r.verdict == TaskVerdict::Pass).count();
        let total = results.len();
        BenchReport {
            suite: suite.into(),
            provider: provider.into(),
            results,
            passed,
            total,
            rate: format!("{passed}/{total}"),
            duration_ms,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }

    pub fn count(&self, v: TaskVerdict) -> usize {
        self.results.iter().filter(|r| r.verdict == v).count()
    }

    /// Verdicts only, for comparing runs.
    pub fn verdicts(&self) -> Vec<(String, TaskVerdict)> {
        self.results.iter().map(|r| (r.id.clone(), r.verdict)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Tasks by provider: `✓` pass, `✓ (*)` pass after several steps, `X`
    /// fail, `X (salient)`, `N/A`, `error`.
    pub fn render_table(&self) -> String {
        let cell = |r: &TaskResult| match r.verdict {
            TaskVerdict::Pass if r.iterations > 1 => "✓ (*)".to_string(),
            TaskVerdict::Pass => "✓".into(),
            TaskVerdict::Fail => "X".into(),
            TaskVerdict::SalientFail => "X (salient)".into(),
            TaskVerdict::NotPossible => "N/A".into(),
            TaskVerdict::Error => "error".into(),
        };
        let gw = self.results.iter().filter_map(|r| r.group.as_ref()).map(|g| g.chars().count()).max().unwrap_or(0).max(8);
        let tw = self.results.iter().map(|r| r.instruction.chars().count()).max().unwrap_or(0).max(4);
        let pw = self.provider.chars().count().max(11);
        let mut out = String::new();
        let _ = writeln!(out, "{:gw$} | {:tw$} | {}", "Software", "Task", self.provider);
        let _ = writeln!(out, "{}-+-{}-+-{}", "-".repeat(gw), "-".repeat(tw), "-".repeat(pw));
        let mut last_group: Option<&str> = None;
        for r in &self.results {
            let g = r.group.as_deref().unwrap_or("");
            let shown = if last_group == Some(g) { "" } else { g };
            last_group = Some(g);
            let _ = writeln!(out, "{:gw$} | {:tw$} | {}", shown, r.instruction, cell(r));
        }
        let _ = writeln!(out, "{}-+-{}-+-{}", "-".repeat(gw), "-".repeat(tw), "-".repeat(pw));
        let _ = writeln!(out, "{:gw$} | {:tw$} | {}", "Average", "", self.rate);
        out
    }
}

#[derive(Clone)]
pub struct BenchOptions {
    /// Base agent settings; verification, approval and rollback are set
    /// per task.
    pub agent: AgentConfig,
    pub provider_name: String,
    /// Worker threads; 1 runs tasks in order on the caller's thread.
    pub parallelism: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { agent: AgentConfig::default(), provider_name: "scripted".into(), parallelism: 1 }
    }
}

fn classify(s: &Session) -> TaskVerdict {
    let last = s.last();
    match s.status {
        SessionStatus::Succeeded => TaskVerdict::Pass,
        _ if matches!(
            last.and_then(|i| i.response.as_ref()),
            Some(AgentResponse { action: AgentAction::NotPossible { .. }, .. })
        ) =>
        {
            TaskVerdict::NotPossible
        }
        _ => match last.and_then(|i| Some((i.verification.as_ref()?, i.result.as_ref()?))) {
            Some((v, r)) if !v.passed && r.is_ok() && r.console_errors().next().is_none() => TaskVerdict::SalientFail,
            _ => TaskVerdict::Fail,
        },
    }
}

/// Runs one task on a fresh copy of its fixture with rollback on failure.
pub fn run_task(task: &TaskSpec, provider: Arc<dyn Provider>, opts: &BenchOptions) -> TaskResult {
    let started = Instant::now();
    let mut result = TaskResult {
        id: task.id.clone(),
        group: task.group.clone(),
        instruction: task.instruction.clone(),
        verdict: TaskVerdict::Error,
        iterations: 0,
        llm_calls: 0,
        duration_ms: 0,
        session_status: None,
        detail: None,
        isolated: false,
    };
    let mut state: HostState = match init_fixture(&task.fixture) {
        Ok(s) => s,
        Err(e) => {
            result.detail = Some(e.to_string());
            return result;
        }
    };
    let golden = golden_hash(&task.fixture);
    let fresh = golden.as_deref().is_none_or(|g| g == state.hash());
    let oracle_error: Arc<Mutex<Option<OracleError>>> = Arc::default();
    let (oracle, err_slot) = (task.oracle.clone(), oracle_error.clone());
    let cfg = AgentConfig {
        verification: VerificationMode::Oracle(Arc::new(move |initial, fin, r| {
            oracle.evaluate(initial, fin, &r.console).unwrap_or_else(|e| {
                *err_slot.lock().unwrap() = Some(e);
                false
            })
        })),
        approval: ApprovalPolicy::AutoGrant,
        rollback_on_failure: true,
        ..opts.agent.clone()
    };
    let agent = Agent::new(cfg, provider, Arc::new(Store::in_memory()));
    match agent.start_with_id(format!("bench-{}", task.id), &task.instruction, &task.fixture, &state) {
        Ok(mut s) => {
            let outcome = agent.run(&mut s, &mut state);
            result.iterations = s.iterations.len();
            result.llm_calls = s.llm_calls;
            result.session_status = Some(s.status);
            match outcome {
                Ok(()) => {
                    result.verdict = classify(&s);
                    result.detail = s.terminal_reason.clone();
                }
                Err(e) => result.detail = Some(e.to_string()),
            }
        }
        Err(e) => result.detail = Some(e.to_string()),
    }
    if let Some(e) = oracle_error.lock().unwrap().take() {
        result.verdict = TaskVerdict::Error;
        result.detail = Some(e.to_string());
    }
    let restored = result.verdict == TaskVerdict::Pass || golden.as_deref().is_none_or(|g| g == state.hash());
    result.isolated = fresh && restored;
    result.duration_ms = started.elapsed().as_millis() as u64;
    result
}

pub fn run_benchmark(suite: &Suite, provider: Arc<dyn Provider>, opts: &BenchOptions) -> BenchReport {
    let started = Instant::now();
    let results: Vec<TaskResult> = if opts.parallelism <= 1 {
        suite.tasks.iter().map(|t| run_task(t, provider.clone(), opts)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.parallelism).build().expect("thread pool");
        pool.install(|| suite.tasks.par_iter().map(|t| run_task(t, provider.clone(), opts)).collect())
    };
    BenchReport::new(&suite.name, &opts.provider_name, results, started.elapsed().as_millis() as u64)
}
