use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AccessKind, Exact, RuleSet};
use crate::host::{BridgeCall, CallKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "reason", rename_all = "lowercase")]
pub enum GuardDecision {
    Allow,
    Deny(String),
}

fn access_kind(call: &BridgeCall) -> AccessKind {
    match call.kind {
        CallKind::Get => AccessKind::Read,
        CallKind::Set(_) => AccessKind::Write,
        CallKind::Invoke(_) => AccessKind::Invoke,
    }
}

/// Exact check of one concrete bridge call. An approval-gated match is
/// allowed only when the code was approved.
pub fn guard_check(call: &BridgeCall, rules: &RuleSet, approved: bool) -> GuardDecision {
    match rules.evaluate(&call.path, access_kind(call)) {
        Exact::Allow => GuardDecision::Allow,
        Exact::Deny(r) => GuardDecision::Deny(r),
        Exact::NeedsApproval(_) if approved => GuardDecision::Allow,
        Exact::NeedsApproval(r) => GuardDecision::Deny(format!("{r} (approval required)")),
    }
}

/// Per-run guard: [`guard_check`] plus the distinct-write-path threshold.
#[derive(Debug, Clone)]
pub struct Guard {
    rules: Arc<RuleSet>,
    approved: bool,
    written: BTreeSet<String>,
}

impl Guard {
    pub fn new(rules: Arc<RuleSet>, approved: bool) -> Guard {
        Guard { rules, approved, written: BTreeSet::new() }
    }

    /// A guard that allows everything.
    pub fn permissive() -> Guard {
        Guard::new(Arc::new(RuleSet::default()), true)
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn check(&mut self, call: &BridgeCall) -> GuardDecision {
        let d = guard_check(call, &self.rules, self.approved);
        if d != GuardDecision::Allow || self.approved || !call.is_mutating() {
            return d;
        }
        if let Some(t) = self.rules.write_threshold {
            self.written.insert(call.path.clone());
            if self.written.len() >= t {
                return GuardDecision::Deny(format!(
                    "script writes {} distinct state paths (threshold {t}, approval required)",
                    self.written.len()
                ));
            }
        }
        GuardDecision::Allow
    }

    pub fn check_global(&self, name: &str) -> GuardDecision {
        match self.rules.evaluate_global(name) {
            Exact::Deny(r) => GuardDecision::Deny(r),
            _ => GuardDecision::Allow,
        }
    }
}
