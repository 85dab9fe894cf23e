//! The agent loop: prompt the model, parse its reply, check the code
//! against the safety rules, run it in the sandbox, and feed the outcome
//! into the next round until the request is done or given up on.

mod prompt;
mod protocol;
mod session;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde_json::json;

pub use prompt::{
    build_prompt, build_safeguard_prompt, build_verify_prompt, prompt_digest, render_history, render_iteration,
    render_result, summarize_iteration, APP_DESCRIPTION, HISTORY_BUDGET, PROMPT_TEMPLATE, SAFEGUARD_TEMPLATE,
    VERIFY_TEMPLATE,
};
pub use protocol::{parse_response, AgentAction, AgentResponse, ParseError};
pub use session::{EventKind, IterationRecord, Session, SessionEvent, SessionStatus, VerificationOutcome};

use crate::context::{shipped_index, Index, DEFAULT_K};
use crate::host::{HostState, StateDiff};
use crate::llm::{ChatRequest, LlmError, Message, Phase, Provider, RequestMeta};
use crate::safety::{analyze, Decision, Guard, Reason, RuleSet, Verdict};
use crate::sandbox::{execute, ActionCode, ExecutionResult, ResourceLimits, SandboxError};
use crate::store::{now_ms, AuditRecord, Store, StoreError};

pub const SYSTEM_LINE: &str =
    "You write JavaScript that operates a desktop application through its bridge object. Reply with JSON only.";

/// Decides success from the pre-session state, the final state and the
/// last execution result.
pub type Oracle = Arc<dyn Fn(&HostState, &HostState, &ExecutionResult) -> bool + Send + Sync>;
pub type EventSink = Arc<dyn Fn(&SessionEvent) + Send + Sync>;

#[derive(Clone, Default)]
pub enum VerificationMode {
    /// Ask the model for a read-only check script.
    #[default]
    Llm,
    /// Trust a successful final step.
    Skip,
    Oracle(Oracle),
}

impl fmt::Debug for VerificationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerificationMode::Llm => f.write_str("Llm"),
            VerificationMode::Skip => f.write_str("Skip"),
            VerificationMode::Oracle(_) => f.write_str("Oracle(..)"),
        }
    }
}

/// What happens when the static check asks for approval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApprovalPolicy {
    /// Pause in `awaiting_approval`.
    #[default]
    Ask,
    AutoGrant,
    AutoDeny,
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub max_iterations: u32,
    /// Seed count for context retrieval.
    pub k: usize,
    pub rules: Arc<RuleSet>,
    pub verify_rules: Arc<RuleSet>,
    pub limits: ResourceLimits,
    pub rollback_on_failure: bool,
    pub verification: VerificationMode,
    pub approval: ApprovalPolicy,
    pub model_name: String,
    /// Model for verification; defaults to `model_name`.
    pub verify_model: Option<String>,
    pub temperature: f64,
    pub max_output: u32,
    pub max_llm_calls: Option<u32>,
    pub history_budget: usize,
    pub app_description: String,
    /// Ask the model to review code the rules allowed. It can only escalate
    /// to NeedsApproval.
    pub llm_safeguard: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_iterations: 5,
            k: DEFAULT_K,
            rules: Arc::new(RuleSet::shipped()),
            verify_rules: Arc::new(RuleSet::verification()),
            limits: ResourceLimits::default(),
            rollback_on_failure: false,
            verification: VerificationMode::Llm,
            approval: ApprovalPolicy::Ask,
            model_name: "scripted".into(),
            verify_model: None,
            temperature: 0.0,
            max_output: 2048,
            max_llm_calls: None,
            history_budget: HISTORY_BUDGET,
            app_description: APP_DESCRIPTION.to_string(),
            llm_safeguard: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("session is {status}, expected {expected}")]
    WrongState { status: SessionStatus, expected: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feedback {
    Approval { grant: bool },
    User { text: String, accomplished: bool },
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(0);

pub fn new_session_id() -> String {
    format!("s{:x}-{}", now_ms(), SESSION_COUNTER.fetch_add(1, Ordering::Relaxed))
}

pub struct Agent {
    cfg: AgentConfig,
    provider: Arc<dyn Provider>,
    verify_provider: Option<Arc<dyn Provider>>,
    index: Arc<Index>,
    store: Arc<Store>,
    sink: Option<EventSink>,
}

impl Agent {
    pub fn new(cfg: AgentConfig, provider: Arc<dyn Provider>, store: Arc<Store>) -> Agent {
        Agent { cfg, provider, verify_provider: None, index: Arc::new(shipped_index()), store, sink: None }
    }

    pub fn with_verify_provider(mut self, p: Arc<dyn Provider>) -> Agent {
        self.verify_provider = Some(p);
        self
    }

    pub fn with_index(mut self, index: Arc<Index>) -> Agent {
        self.index = index;
        self
    }

    pub fn with_events(mut self, sink: EventSink) -> Agent {
        self.sink = Some(sink);
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// A fresh running session over `state`, with its pre-session snapshot.
    pub fn start(&self, instruction: &str, fixture: &str, state: &HostState) -> Result<Session, AgentError> {
        self.start_with_id(new_session_id(), instruction, fixture, state)
    }

    pub fn start_with_id(
        &self,
        id: String,
        instruction: &str,
        fixture: &str,
        state: &HostState,
    ) -> Result<Session, AgentError> {
        let pre = self.store.take_snapshot(state, &id, 0)?;
        let mut s = Session {
            id,
            instruction: instruction.to_string(),
            fixture: fixture.to_string(),
            iterations: Vec::new(),
            status: SessionStatus::Running,
            max_iterations: self.cfg.max_iterations,
            pre_session_snapshot: pre,
            terminal_reason: None,
            llm_calls: 0,
            created_at_ms: now_ms(),
            event_seq: 0,
        };
        self.emit(&mut s, EventKind::StatusChanged, json!({"from": null, "to": "running", "reason": null}))?;
        self.save(&s)?;
        Ok(s)
    }

    /// Steps until the session leaves `running`.
    pub fn run(&self, s: &mut Session, state: &mut HostState) -> Result<(), AgentError> {
        while s.status == SessionStatus::Running {
            self.step(s, state)?;
        }
        Ok(())
    }

    /// One round: retrieve context, prompt, parse, check, execute, record.
    pub fn step(&self, s: &mut Session, state: &mut HostState) -> Result<(), AgentError> {
        let r = self.step_inner(s, state);
        self.on_model_error(s, state, r)
    }

    /// A failed model call ends the session like any other failure.
    fn on_model_error(&self, s: &mut Session, state: &mut HostState, r: Result<(), AgentError>) -> Result<(), AgentError> {
        if let Err(AgentError::Llm(e)) = &r {
            self.fail(s, state, format!("model call failed: {e}"))?;
            self.save(s)?;
        }
        r
    }

    fn step_inner(&self, s: &mut Session, state: &mut HostState) -> Result<(), AgentError> {
        if s.status != SessionStatus::Running {
            return Err(AgentError::WrongState { status: s.status, expected: "running" });
        }
        if s.iterations.len() as u32 >= s.max_iterations {
            return self.check_budget(s, state);
        }
        let index = s.iterations.len() as u32 + 1;
        self.emit(s, EventKind::IterationStarted, json!({"index": index}))?;
        let snippets = self.index.retrieve(&s.instruction, self.cfg.k);
        let prompt = build_prompt(s, &snippets, &self.cfg.app_description, self.cfg.history_budget);
        let meta = RequestMeta {
            instruction: s.instruction.clone(),
            iteration: index,
            last_error: s.last().and_then(IterationRecord::feedback_text),
            phase: Phase::Act,
        };
        let raw = self.complete(s, &self.provider, &self.cfg.model_name, prompt.clone(), meta)?;
        let snapshot_id = self.store.take_snapshot(state, &s.id, index)?;
        let mut rec = IterationRecord {
            index,
            prompt_digest: prompt_digest(&prompt),
            raw_response: raw,
            response: None,
            parse_error: None,
            verdict: None,
            approval: None,
            result: None,
            verification: None,
            snapshot_id,
            feedback: None,
        };
        let resp = match parse_response(&rec.raw_response) {
            Ok(r) => r,
            Err(e) => {
                rec.parse_error = Some(e.to_string());
                self.emit(s, EventKind::ResponseParsed, json!({"index": index, "error": e.to_string()}))?;
                s.iterations.push(rec);
                self.audit(s, "parse_error", StateDiff::default())?;
                return self.check_budget(s, state);
            }
        };
        self.emit(s, EventKind::ResponseParsed, json!({"index": index, "response": resp}))?;
        rec.response = Some(resp.clone());
        match resp.action {
            AgentAction::NotPossible { reasons } => {
                s.iterations.push(rec);
                self.audit(s, "not_possible", StateDiff::default())?;
                self.fail(s, state, format!("not possible: {reasons}"))?;
            }
            AgentAction::Code(code) => {
                let verdict = self.check(s, &code)?;
                self.emit(s, EventKind::Verdict, json!({"index": index, "verdict": verdict}))?;
                let decision = verdict.decision;
                rec.verdict = Some(verdict);
                s.iterations.push(rec);
                match (decision, self.cfg.approval) {
                    (Decision::Allow, _) => self.execute_last(s, state, false)?,
                    (Decision::Deny, _) => self.audit(s, "denied", StateDiff::default())?,
                    (Decision::NeedsApproval, ApprovalPolicy::Ask) => {
                        self.audit(s, "awaiting_approval", StateDiff::default())?;
                        self.set_status(s, SessionStatus::AwaitingApproval, None)?;
                    }
                    (Decision::NeedsApproval, ApprovalPolicy::AutoGrant) => {
                        last_mut(s).approval = Some(true);
                        self.execute_last(s, state, true)?;
                    }
                    (Decision::NeedsApproval, ApprovalPolicy::AutoDeny) => {
                        last_mut(s).approval = Some(false);
                        self.audit(s, "approval_declined", StateDiff::default())?;
                    }
                }
            }
        }
        self.check_budget(s, state)
    }

    /// Resumes a paused session. After this returns with the session
    /// `running`, call [`Agent::run`] to continue.
    pub fn incorporate_feedback(
        &self,
        s: &mut Session,
        state: &mut HostState,
        feedback: Feedback,
    ) -> Result<(), AgentError> {
        let r = self.feedback_inner(s, state, feedback);
        self.on_model_error(s, state, r)
    }

    fn feedback_inner(&self, s: &mut Session, state: &mut HostState, feedback: Feedback) -> Result<(), AgentError> {
        match (feedback, s.status) {
            (Feedback::Approval { grant }, SessionStatus::AwaitingApproval) => {
                last_mut(s).approval = Some(grant);
                self.set_status(s, SessionStatus::Running, None)?;
                if grant {
                    self.execute_last(s, state, true)?;
                } else {
                    self.audit(s, "approval_declined", StateDiff::default())?;
                }
            }
            (Feedback::User { text, accomplished }, SessionStatus::AwaitingUser) => {
                if !text.is_empty() {
                    last_mut(s).feedback = Some(text);
                }
                if accomplished {
                    self.set_status(s, SessionStatus::Succeeded, Some("confirmed by the user".into()))?;
                } else {
                    self.set_status(s, SessionStatus::Running, None)?;
                }
            }
            (Feedback::Approval { .. }, status) => {
                return Err(AgentError::WrongState { status, expected: "awaiting_approval" })
            }
            (Feedback::User { .. }, status) => return Err(AgentError::WrongState { status, expected: "awaiting_user" }),
        }
        self.check_budget(s, state)
    }

    /// Restores `state` to a snapshot, by default the pre-session one. A
    /// paused session ends as `rolled_back`; finished sessions keep their
    /// status. The store logs the rollback in the audit trail.
    pub fn rollback_session(
        &self,
        s: &mut Session,
        state: &mut HostState,
        snapshot: Option<u64>,
    ) -> Result<(), AgentError> {
        if s.status == SessionStatus::Running {
            return Err(AgentError::WrongState { status: s.status, expected: "paused or finished" });
        }
        let id = snapshot.unwrap_or(s.pre_session_snapshot);
        *state = self.store.rollback(id, state)?;
        if s.status.is_paused() {
            self.set_status(s, SessionStatus::RolledBack, Some(format!("rolled back to snapshot {id}")))?;
        }
        self.save(s)
    }

    /// Asks the model for a read-only check of the last iteration and runs
    /// it under the verification rules against a copy of `state`.
    pub fn generate_verification(&self, s: &mut Session, state: &HostState) -> Result<VerificationOutcome, AgentError> {
        let it = s.last().ok_or(AgentError::WrongState { status: s.status, expected: "an executed iteration" })?;
        let (code, result) = match (&it.response, &it.result) {
            (Some(AgentResponse { action: AgentAction::Code(c), .. }), Some(r)) => (c.clone(), r.clone()),
            _ => return Err(AgentError::WrongState { status: s.status, expected: "an executed iteration" }),
        };
        let snippets = self.index.retrieve(&s.instruction, self.cfg.k);
        let prompt = build_verify_prompt(&s.instruction, &code.source, &result, &snippets, &self.cfg.app_description);
        let meta = RequestMeta {
            instruction: s.instruction.clone(),
            iteration: it.index,
            last_error: None,
            phase: Phase::Verify,
        };
        let provider = self.verify_provider.as_ref().unwrap_or(&self.provider).clone();
        let model = self.cfg.verify_model.clone().unwrap_or_else(|| self.cfg.model_name.clone());
        let raw = self.complete(s, &provider, &model, prompt, meta)?;
        let outcome = match parse_response(&raw) {
            Ok(AgentResponse { action: AgentAction::Code(vc), .. }) => {
                let guard = Guard::new(self.cfg.verify_rules.clone(), false);
                let (_, r) = execute(&vc, state, &self.cfg.limits, guard)?;
                let pass = r.console.iter().any(|l| l.contains("VERIFY:PASS"));
                let fail = r.console.iter().any(|l| l.contains("VERIFY:FAIL"));
                let passed = r.is_ok() && pass && !fail;
                let detail = if passed {
                    "VERIFY:PASS".to_string()
                } else if fail && r.is_ok() {
                    "VERIFY:FAIL".to_string()
                } else {
                    format!("check did not confirm the result ({})", render_result(&r).replace('\n', "; "))
                };
                VerificationOutcome { code_hash: Some(vc.hash), passed, detail }
            }
            Ok(AgentResponse { action: AgentAction::NotPossible { reasons }, .. }) => {
                VerificationOutcome { code_hash: None, passed: false, detail: format!("no check produced: {reasons}") }
            }
            Err(e) => VerificationOutcome { code_hash: None, passed: false, detail: format!("check reply unusable: {e}") },
        };
        Ok(outcome)
    }

    fn execute_last(&self, s: &mut Session, state: &mut HostState, approved: bool) -> Result<(), AgentError> {
        let it = s.iterations.last().expect("an iteration to execute");
        let (code, final_step) = match &it.response {
            Some(AgentResponse { action: AgentAction::Code(c), final_step, .. }) => (c.clone(), *final_step),
            _ => unreachable!("only code responses are executed"),
        };
        let index = it.index;
        let guard = Guard::new(self.cfg.rules.clone(), approved);
        let (next, result) = execute(&code, state, &self.cfg.limits, guard)?;
        *state = next;
        self.emit(s, EventKind::ExecutionResult, json!({"index": index, "phase": "act", "result": result}))?;
        self.audit(s, result.status.as_str(), result.state_diff.clone())?;
        let ok = result.is_ok();
        last_mut(s).result = Some(result);
        if ok && final_step {
            self.verify(s, state)?;
        }
        Ok(())
    }

    fn verify(&self, s: &mut Session, state: &mut HostState) -> Result<(), AgentError> {
        let outcome = match &self.cfg.verification {
            VerificationMode::Skip => {
                return self.set_status(s, SessionStatus::Succeeded, Some("final step completed".into()));
            }
            VerificationMode::Oracle(f) => {
                let initial = self.store.snapshot(s.pre_session_snapshot)?.state;
                let r = s.last().and_then(|i| i.result.as_ref()).expect("executed");
                let passed = f(&initial, state, r);
                let detail = if passed { "oracle accepted the final state" } else { "oracle rejected the final state" };
                VerificationOutcome { code_hash: None, passed, detail: detail.into() }
            }
            VerificationMode::Llm => self.generate_verification(s, state)?,
        };
        let index = s.last().map(|i| i.index).unwrap_or(0);
        self.emit(s, EventKind::ExecutionResult, json!({"index": index, "phase": "verify", "verification": outcome}))?;
        let passed = outcome.passed;
        let detail = outcome.detail.clone();
        last_mut(s).verification = Some(outcome);
        match (passed, &self.cfg.verification) {
            (true, _) => self.set_status(s, SessionStatus::Succeeded, Some("verified".into())),
            (false, VerificationMode::Oracle(_)) => self.fail(s, state, format!("verification failed: {detail}")),
            (false, _) => self.set_status(s, SessionStatus::AwaitingUser, Some(format!("verification failed: {detail}"))),
        }
    }

    fn check(&self, s: &mut Session, code: &ActionCode) -> Result<Verdict, AgentError> {
        // A syntax error is left for the sandbox to report.
        let verdict = analyze(&code.source, &self.cfg.rules).unwrap_or_else(|_| Verdict::allow());
        if !self.cfg.llm_safeguard || verdict.decision != Decision::Allow {
            return Ok(verdict);
        }
        let meta = RequestMeta {
            instruction: s.instruction.clone(),
            iteration: s.iterations.len() as u32 + 1,
            last_error: None,
            phase: Phase::Safeguard,
        };
        let prompt = build_safeguard_prompt(&code.source, &self.cfg.rules.render());
        let raw = self.complete(s, &self.provider, &self.cfg.model_name, prompt, meta)?;
        Ok(match raw.trim().strip_prefix("ESCALATE") {
            Some(rest) => {
                let reason = rest.trim_start_matches(':').trim();
                let reason = if reason.is_empty() { "flagged by the reviewing model" } else { reason };
                Verdict::from_findings(vec![(
                    Decision::NeedsApproval,
                    Reason { reason: reason.to_string(), site: "model review".into(), line: 1, col: 1 },
                )])
            }
            None => verdict,
        })
    }

    fn complete(
        &self,
        s: &mut Session,
        provider: &Arc<dyn Provider>,
        model: &str,
        prompt: String,
        meta: RequestMeta,
    ) -> Result<String, AgentError> {
        let res = match self.cfg.max_llm_calls {
            Some(max) if s.llm_calls >= max => Err(LlmError::BudgetExceeded(max)),
            _ => {
                s.llm_calls += 1;
                let req = ChatRequest {
                    system: SYSTEM_LINE.into(),
                    messages: vec![Message::user(prompt)],
                    model_name: model.to_string(),
                    temperature: self.cfg.temperature,
                    max_output: self.cfg.max_output,
                    meta,
                };
                provider.complete(&req)
            }
        };
        Ok(res?)
    }

    fn check_budget(&self, s: &mut Session, state: &mut HostState) -> Result<(), AgentError> {
        if s.status == SessionStatus::Running && s.iterations.len() as u32 >= s.max_iterations {
            self.fail(s, state, format!("no success within {} iterations", s.max_iterations))?;
        }
        self.save(s)
    }

    fn fail(&self, s: &mut Session, state: &mut HostState, reason: String) -> Result<(), AgentError> {
        if self.cfg.rollback_on_failure {
            *state = self.store.rollback(s.pre_session_snapshot, state)?;
            self.set_status(s, SessionStatus::RolledBack, Some(reason))
        } else {
            self.set_status(s, SessionStatus::Failed, Some(reason))
        }
    }

    fn set_status(&self, s: &mut Session, to: SessionStatus, reason: Option<String>) -> Result<(), AgentError> {
        if s.status == to || s.status.is_terminal() {
            return Ok(());
        }
        let from = s.status;
        s.status = to;
        if to.is_terminal() || to.is_paused() {
            s.terminal_reason = reason.clone();
        }
        self.emit(s, EventKind::StatusChanged, json!({"from": from, "to": to, "reason": reason}))
    }

    fn audit(&self, s: &Session, status: &str, diff: StateDiff) -> Result<(), AgentError> {
        let it = s.iterations.last().expect("an iteration to audit");
        let code_hash = match &it.response {
            Some(AgentResponse { action: AgentAction::Code(c), .. }) => Some(c.hash.clone()),
            _ => None,
        };
        self.store.append_audit(AuditRecord {
            session_id: s.id.clone(),
            iteration_index: it.index,
            code_hash,
            verdict_decision: it.verdict.as_ref().map(|v| v.decision.as_str().to_string()),
            result_status: status.to_string(),
            snapshot_id: it.snapshot_id,
            state_diff: diff,
        })?;
        Ok(())
    }

    fn emit(&self, s: &mut Session, kind: EventKind, payload: serde_json::Value) -> Result<(), AgentError> {
        let ev = SessionEvent { session_id: s.id.clone(), kind, payload, seq: s.event_seq };
        s.event_seq += 1;
        self.store.append_event(&s.id, &serde_json::to_value(&ev).expect("event serializes"))?;
        if let Some(sink) = &self.sink {
            sink(&ev);
        }
        Ok(())
    }

    fn save(&self, s: &Session) -> Result<(), AgentError> {
        Ok(self.store.save_session(&s.id, &s.to_json())?)
    }
}

fn last_mut(s: &mut Session) -> &mut IterationRecord {
    s.iterations.last_mut().expect("session has an iteration")
}

/// Marks every persisted session that was not terminal as failed. Used at
/// startup after an unclean stop; returns the affected ids.
pub fn recover_interrupted(store: &Store) -> Result<Vec<String>, AgentError> {
    let mut out = Vec::new();
    for (id, rec) in store.sessions() {
        let Ok(mut s) = serde_json::from_value::<Session>(rec) else { continue };
        if s.status.is_terminal() {
            continue;
        }
        let from = s.status;
        s.status = SessionStatus::Failed;
        s.terminal_reason = Some(format!("interrupted: the service stopped while the session was {from}"));
        s.event_seq = store.events(&id).len() as u64;
        let ev = SessionEvent {
            session_id: id.clone(),
            kind: EventKind::StatusChanged,
            payload: json!({"from": from, "to": s.status, "reason": s.terminal_reason}),
            seq: s.event_seq,
        };
        s.event_seq += 1;
        store.append_event(&id, &serde_json::to_value(&ev).expect("event serializes"))?;
        store.save_session(&id, &s.to_json())?;
        out.push(id);
    }
    Ok(out)
}
