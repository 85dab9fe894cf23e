use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::protocol::{AgentAction, AgentResponse};
use crate::safety::{Decision, Verdict};
use crate::sandbox::ExecutionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    AwaitingApproval,
    AwaitingUser,
    Succeeded,
    Failed,
    RolledBack,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Running => "running",
            SessionStatus::AwaitingApproval => "awaiting_approval",
            SessionStatus::AwaitingUser => "awaiting_user",
            SessionStatus::Succeeded => "succeeded",
            SessionStatus::Failed => "failed",
            SessionStatus::RolledBack => "rolled_back",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionStatus::Succeeded | SessionStatus::Failed | SessionStatus::RolledBack)
    }

    pub fn is_paused(self) -> bool {
        matches!(self, SessionStatus::AwaitingApproval | SessionStatus::AwaitingUser)
    }
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    /// Hash of the verification code, absent when an oracle decided.
    pub code_hash: Option<String>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub index: u32,
    pub prompt_digest: String,
    pub raw_response: String,
    /// Absent when the reply did not parse; `parse_error` says why.
    pub response: Option<AgentResponse>,
    pub parse_error: Option<String>,
    pub verdict: Option<Verdict>,
    /// Decision on a NeedsApproval verdict, once made.
    pub approval: Option<bool>,
    pub result: Option<ExecutionResult>,
    pub verification: Option<VerificationOutcome>,
    pub snapshot_id: u64,
    /// User text given after this iteration.
    pub feedback: Option<String>,
}

impl IterationRecord {
    /// One word describing how the iteration ended.
    pub fn status_label(&self) -> &'static str {
        if let Some(r) = &self.result {
            return r.status.as_str();
        }
        if self.parse_error.is_some() {
            return "parse_error";
        }
        if let Some(AgentResponse { action: AgentAction::NotPossible { .. }, .. }) = &self.response {
            return "not_possible";
        }
        match (&self.verdict, self.approval) {
            (Some(v), _) if v.decision == Decision::Deny => "denied",
            (Some(v), None) if v.decision == Decision::NeedsApproval => "awaiting_approval",
            (Some(v), Some(false)) if v.decision == Decision::NeedsApproval => "approval_declined",
            _ => "pending",
        }
    }

    /// Short error class for summarized history lines.
    pub fn error_kind(&self) -> String {
        if let Some(e) = self.result.as_ref().and_then(|r| r.error.as_ref()) {
            return serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        }
        match self.status_label() {
            "parse_error" => "ParseError".into(),
            "denied" | "approval_declined" => "SafetyDenied".into(),
            _ => "none".into(),
        }
    }

    /// What the next round should react to: the error text, console
    /// errors, denial reasons, a failed check or user feedback.
    pub fn feedback_text(&self) -> Option<String> {
        if let Some(f) = &self.feedback {
            return Some(f.clone());
        }
        if let Some(e) = &self.parse_error {
            return Some(e.clone());
        }
        if let Some(r) = &self.result {
            if let Some(e) = &r.error {
                return Some(e.text.clone());
            }
            let errs: Vec<&str> = r.console_errors().collect();
            if !errs.is_empty() {
                return Some(errs.join("\n"));
            }
        } else if let Some(v) = &self.verdict {
            if v.decision != Decision::Allow {
                return Some(v.summary());
            }
        }
        match &self.verification {
            Some(v) if !v.passed => Some(format!("verification failed: {}", v.detail)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub instruction: String,
    /// Fixture name, or `live` for the service's host.
    pub fixture: String,
    pub iterations: Vec<IterationRecord>,
    pub status: SessionStatus,
    pub max_iterations: u32,
    pub pre_session_snapshot: u64,
    pub terminal_reason: Option<String>,
    pub llm_calls: u32,
    pub created_at_ms: u64,
    /// Next event sequence number.
    pub event_seq: u64,
}

impl Session {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }

    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("session serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    IterationStarted,
    ResponseParsed,
    Verdict,
    ExecutionResult,
    StatusChanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    pub kind: EventKind,
    pub payload: Json,
    /// Gapless per session, starting at 0.
    pub seq: u64,
}
