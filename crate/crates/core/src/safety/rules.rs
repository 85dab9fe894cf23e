use std::fmt;

use glob::Pattern;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    DenyCall,
    DenyWrite,
    DenyGlobal,
    RequireApproval,
    AllowlistMode,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::DenyCall => "deny_call",
            RuleKind::DenyWrite => "deny_write",
            RuleKind::DenyGlobal => "deny_global",
            RuleKind::RequireApproval => "require_approval",
            RuleKind::AllowlistMode => "allowlist_mode",
        }
    }

    fn parse(s: &str) -> Option<RuleKind> {
        Some(match s {
            "deny_call" => RuleKind::DenyCall,
            "deny_write" => RuleKind::DenyWrite,
            "deny_global" => RuleKind::DenyGlobal,
            "require_approval" => RuleKind::RequireApproval,
            "allowlist_mode" => RuleKind::AllowlistMode,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SafetyRule {
    pub kind: RuleKind,
    /// One glob for most kinds; the permitted path prefixes for
    /// `allowlist_mode`.
    pub patterns: Vec<String>,
    pub reason: String,
    /// 1-based line in the rule file.
    pub line: usize,
    #[serde(skip)]
    globs: Vec<Pattern>,
}

impl SafetyRule {
    pub fn new(kind: RuleKind, patterns: &[&str], reason: &str) -> Result<SafetyRule, RuleSyntaxError> {
        build(kind, patterns.iter().map(|s| s.to_string()).collect(), reason.to_string(), 0)
    }

    /// Glob match against a concrete path or global name.
    pub fn matches(&self, path: &str) -> bool {
        self.globs.iter().any(|g| g.matches(path))
    }

    /// For allowlist rules: whether `path` lies under a permitted prefix.
    pub fn allowlisted(&self, path: &str) -> bool {
        self.patterns.iter().any(|p| under(path, p))
    }

    /// For allowlist rules: whether `path` is an ancestor namespace of a
    /// permitted prefix (reading it is needed to reach the prefix).
    pub fn is_ancestor(&self, path: &str) -> bool {
        self.patterns.iter().any(|p| p.starts_with(&format!("{path}.")))
    }

    /// The part of each pattern before its first wildcard.
    pub fn literal_prefixes(&self) -> impl Iterator<Item = &str> {
        self.patterns
            .iter()
            .map(|p| &p[..p.find(['*', '?', '[']).unwrap_or(p.len())])
    }
}

pub(crate) fn under(path: &str, prefix: &str) -> bool {
    path == prefix || path.starts_with(&format!("{prefix}."))
}

impl fmt::Display for SafetyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} \"{}\"", self.kind.as_str(), self.patterns.join(" "), self.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultDecision {
    Allow,
    Deny,
}

/// Ordered rules; the first rule that matches an access decides it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleSet {
    pub rules: Vec<SafetyRule>,
    /// Applies to bridge accesses no rule matched.
    pub default: DefaultDecision,
    /// A script writing this many distinct state paths needs approval.
    pub write_threshold: Option<usize>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet { rules: Vec::new(), default: DefaultDecision::Allow, write_threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rule file line {line}: {message}")]
pub struct RuleSyntaxError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, RuleSyntaxError> {
    Err(RuleSyntaxError { line, message: message.into() })
}

fn build(kind: RuleKind, patterns: Vec<String>, reason: String, line: usize) -> Result<SafetyRule, RuleSyntaxError> {
    if patterns.is_empty() {
        return err(line, format!("{} needs a pattern", kind.as_str()));
    }
    if kind != RuleKind::AllowlistMode && patterns.len() > 1 {
        return err(line, format!("{} takes exactly one pattern", kind.as_str()));
    }
    let globs = patterns
        .iter()
        .map(|p| Pattern::new(p).or_else(|e| err(line, format!("bad pattern '{p}': {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SafetyRule { kind, patterns, reason, line, globs })
}

/// Splits a line into bare words and at most one trailing quoted reason.
fn split_line(line: &str, n: usize) -> Result<(Vec<&str>, Option<String>), RuleSyntaxError> {
    match line.find('"') {
        None => {
            let bare = line.split_once('#').map_or(line, |(b, _)| b);
            Ok((bare.split_whitespace().collect(), None))
        }
        Some(q) => {
            let rest = &line[q + 1..];
            let mut reason = String::new();
            let mut chars = rest.char_indices();
            let mut end = None;
            while let Some((i, c)) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some((_, c)) => reason.push(c),
                        None => return err(n, "dangling escape in reason"),
                    },
                    '"' => {
                        end = Some(i);
                        break;
                    }
                    c => reason.push(c),
                }
            }
            let Some(end) = end else {
                return err(n, "unterminated reason string");
            };
            let tail = rest[end + 1..].trim();
            if !tail.is_empty() && !tail.starts_with('#') {
                return err(n, format!("unexpected text after reason: {tail}"));
            }
            Ok((line[..q].split_whitespace().collect(), Some(reason)))
        }
    }
}

/// Parses the line-oriented rule format:
///
/// ```text
/// # comment
/// default allow
/// write_threshold 3
/// deny_global fetch "network access"
/// deny_write app.library.* "library is read-only"
/// allowlist_mode app.player app.ui "player and navigation only"
/// ```
pub fn load_rules(text: &str) -> Result<RuleSet, RuleSyntaxError> {
    let mut set = RuleSet::default();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (words, reason) = split_line(line, n)?;
        let Some((&head, args)) = words.split_first() else {
            return err(n, "missing rule kind");
        };
        match head {
            "default" => {
                set.default = match (args, &reason) {
                    (["allow"], None) => DefaultDecision::Allow,
                    (["deny"], None) => DefaultDecision::Deny,
                    _ => return err(n, "expected 'default allow' or 'default deny'"),
                }
            }
            "write_threshold" => match (args, &reason) {
                ([k], None) => match k.parse::<usize>() {
                    Ok(v) if v > 0 => set.write_threshold = Some(v),
                    _ => return err(n, format!("bad write_threshold '{k}'")),
                },
                _ => return err(n, "expected 'write_threshold N'"),
            },
            kind => {
                let Some(kind) = RuleKind::parse(kind) else {
                    return err(n, format!("unknown rule kind '{kind}'"));
                };
                let patterns: Vec<String> = args.iter().map(|s| s.to_string()).collect();
                let reason = reason.unwrap_or_else(|| format!("{} {}", kind.as_str(), patterns.join(" ")));
                set.rules.push(build(kind, patterns, reason, n)?);
            }
        }
    }
    Ok(set)
}

pub const DEFAULT_RULES: &str = include_str!("../../assets/default.rules");
pub const VERIFY_RULES: &str = include_str!("../../assets/verify.rules");

impl RuleSet {
    /// The ruleset shipped with the reference host.
    pub fn shipped() -> RuleSet {
        load_rules(DEFAULT_RULES).expect("shipped rules parse")
    }

    /// Rules for verification scripts: every bridge write is denied.
    pub fn verification() -> RuleSet {
        load_rules(VERIFY_RULES).expect("verification rules parse")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(match self.default {
            DefaultDecision::Allow => "default allow\n",
            DefaultDecision::Deny => "default deny\n",
        });
        if let Some(t) = self.write_threshold {
            out.push_str(&format!("write_threshold {t}\n"));
        }
        for r in &self.rules {
            let reason = r.reason.replace('\\', "\\\\").replace('"', "\\\"");
            out.push_str(&format!("{} {} \"{reason}\"\n", r.kind.as_str(), r.patterns.join(" ")));
        }
        out
    }
}
