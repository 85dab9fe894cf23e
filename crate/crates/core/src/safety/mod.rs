//! Developer-authored safety rules, checked twice: statically over the
//! action code's syntax tree before it runs, and exactly at every bridge
//! access while it runs.

mod analyze;
mod guard;
mod rules;

use serde::{Deserialize, Serialize};

pub use analyze::{analyze, analyze_program, AnalyzeError};
pub use guard::{guard_check, Guard, GuardDecision};
pub use rules::{
    load_rules, DefaultDecision, RuleKind, RuleSet, RuleSyntaxError, SafetyRule, DEFAULT_RULES,
    VERIFY_RULES,
};

use crate::host::{surface, Access};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
    Invoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    NeedsApproval,
    Deny,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Allow => "allow",
            Decision::NeedsApproval => "needs_approval",
            Decision::Deny => "deny",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    /// The rule's reason text (or a synthesized one).
    pub reason: String,
    /// What was matched, e.g. `write app.library.favorites`.
    pub site: String,
    pub line: u32,
    pub col: u32,
}

impl Reason {
    pub fn location(&self) -> String {
        format!("{}:{}", self.line, self.col)
    }
}

impl std::fmt::Display for Reason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} at {}:{})", self.reason, self.site, self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub reasons: Vec<Reason>,
}

impl Verdict {
    pub fn allow() -> Verdict {
        Verdict { decision: Decision::Allow, reasons: Vec::new() }
    }

    /// Combines per-site findings: Deny dominates NeedsApproval dominates
    /// Allow, keeping the reasons of the winning level.
    pub fn from_findings(findings: Vec<(Decision, Reason)>) -> Verdict {
        let decision = findings.iter().map(|f| f.0).max().unwrap_or(Decision::Allow);
        let reasons = if decision == Decision::Allow {
            Vec::new()
        } else {
            findings.into_iter().filter(|f| f.0 == decision).map(|f| f.1).collect()
        };
        Verdict { decision, reasons }
    }

    pub fn summary(&self) -> String {
        match self.decision {
            Decision::Allow => "allow".into(),
            d => {
                let rs: Vec<String> = self.reasons.iter().map(|r| r.to_string()).collect();
                format!("{}: {}", d.as_str(), rs.join("; "))
            }
        }
    }
}

/// Exact outcome of the rules for one concrete access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exact {
    Allow,
    NeedsApproval(String),
    Deny(String),
}

/// Whether invoking `path` can mutate state. Unknown paths count as
/// mutating so that rules err on the side of blocking.
pub fn invoke_mutates(path: &str) -> bool {
    match surface().iter().find(|e| e.path == path) {
        Some(e) => matches!(e.access, Access::Method { mutating: true }),
        None => true,
    }
}

impl RuleSet {
    /// First-match evaluation for a bridge access.
    pub fn evaluate(&self, path: &str, kind: AccessKind) -> Exact {
        let writes = kind == AccessKind::Write || (kind == AccessKind::Invoke && invoke_mutates(path));
        for r in &self.rules {
            let hit = match r.kind {
                RuleKind::DenyGlobal => false,
                RuleKind::DenyCall => kind == AccessKind::Invoke && r.matches(path),
                RuleKind::DenyWrite => writes && r.matches(path),
                RuleKind::RequireApproval => kind != AccessKind::Read && r.matches(path),
                RuleKind::AllowlistMode => {
                    !(r.allowlisted(path) || (kind == AccessKind::Read && r.is_ancestor(path)))
                }
            };
            if hit {
                return match r.kind {
                    RuleKind::RequireApproval => Exact::NeedsApproval(r.reason.clone()),
                    RuleKind::AllowlistMode => Exact::Deny(format!("{} (not allowlisted)", r.reason)),
                    _ => Exact::Deny(r.reason.clone()),
                };
            }
        }
        match self.default {
            DefaultDecision::Allow => Exact::Allow,
            DefaultDecision::Deny => Exact::Deny("no rule permits this access (default deny)".into()),
        }
    }

    /// First-match evaluation for a free identifier.
    pub fn evaluate_global(&self, name: &str) -> Exact {
        for r in &self.rules {
            if r.kind == RuleKind::DenyGlobal && r.matches(name) {
                return Exact::Deny(r.reason.clone());
            }
        }
        Exact::Allow
    }
}
