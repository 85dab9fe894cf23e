use sha2::{Digest, Sha256};

use super::session::{IterationRecord, Session};
use crate::context::Snippet;
use crate::host::ROOT;
use crate::sandbox::ExecutionResult;

pub const PROMPT_TEMPLATE: &str = include_str!("../../assets/prompt.txt");
pub const VERIFY_TEMPLATE: &str = include_str!("../../assets/verify_prompt.txt");
pub const SAFEGUARD_TEMPLATE: &str = include_str!("../../assets/safeguard_prompt.txt");
pub const APP_DESCRIPTION: &str = include_str!("../../assets/app_description.txt");

/// Default character budget for the HISTORY block.
pub const HISTORY_BUDGET: usize = 16_000;

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

pub fn render_context(snippets: &[Snippet]) -> String {
    snippets.iter().map(|s| format!("- {}", s.text.replace('\n', "\n  "))).collect::<Vec<_>>().join("\n")
}

pub fn render_result(r: &ExecutionResult) -> String {
    let mut out = format!("Result: status={}", r.status.as_str());
    if let Some(v) = &r.return_value {
        out.push_str(&format!("\nReturned: {v}"));
    }
    if let Some(e) = &r.error {
        match &e.location {
            Some(l) => out.push_str(&format!("\nError: {} (at {l})", e.text)),
            None => out.push_str(&format!("\nError: {}", e.text)),
        }
    }
    if !r.console.is_empty() {
        out.push_str("\nConsole:");
        for l in &r.console {
            out.push_str("\n  ");
            out.push_str(l);
        }
    }
    out
}

/// The full history entry for one iteration.
pub fn render_iteration(it: &IterationRecord) -> String {
    let mut out = format!("Iteration {}", it.index);
    match &it.response {
        Some(r) => out.push_str(&format!("\nResponse: {}", r.to_json())),
        None => out.push_str(&format!("\nResponse: {}", it.raw_response)),
    }
    if let Some(e) = &it.parse_error {
        out.push_str(&format!(
            "\nResult: status=parse_error\nError: {e}. Reply again with exactly one JSON object in the required format."
        ));
    }
    if let Some(v) = &it.verdict {
        if !v.reasons.is_empty() {
            out.push_str(&format!("\nSafety check: {}", v.summary()));
        }
    }
    match it.approval {
        Some(false) => out.push_str("\nResult: status=approval_declined\nThe user declined to run this code."),
        Some(true) => out.push_str("\nThe user approved this code."),
        None => {}
    }
    match &it.result {
        Some(r) => {
            out.push('\n');
            out.push_str(&render_result(r));
        }
        None if it.parse_error.is_none() && it.approval != Some(false) => {
            out.push_str(&format!("\nResult: status={}", it.status_label()));
        }
        None => {}
    }
    if let Some(v) = &it.verification {
        let word = if v.passed { "passed" } else { "failed" };
        out.push_str(&format!("\nVerification {word}: {}", v.detail));
    }
    if let Some(f) = &it.feedback {
        out.push_str(&format!("\nUser feedback: {f}"));
    }
    out
}

pub fn summarize_iteration(it: &IterationRecord) -> String {
    format!("Iteration {}: status={}, error={}", it.index, it.status_label(), it.error_kind())
}

/// HISTORY body within `budget` characters: the oldest entries collapse to
/// one-line summaries first; the newest entry is always kept whole.
pub fn render_history(iterations: &[IterationRecord], budget: usize) -> String {
    let full: Vec<String> = iterations.iter().map(render_iteration).collect();
    let short: Vec<String> = iterations.iter().map(summarize_iteration).collect();
    let total = |cut: usize| -> usize {
        short[..cut].iter().map(|s| s.len() + 1).sum::<usize>() + full[cut..].iter().map(|s| s.len() + 2).sum::<usize>()
    };
    let mut cut = 0;
    while cut + 1 < iterations.len() && total(cut) > budget {
        cut += 1;
    }
    let mut parts: Vec<String> = Vec::new();
    if cut > 0 {
        parts.push(short[..cut].join("\n"));
    }
    parts.extend(full[cut..].iter().cloned());
    parts.join("\n\n")
}

pub fn build_prompt(session: &Session, snippets: &[Snippet], app_description: &str, history_budget: usize) -> String {
    fill(
        PROMPT_TEMPLATE,
        &[
            ("app_description", app_description.trim_end()),
            ("root", ROOT),
            ("context", &render_context(snippets)),
            ("history", &render_history(&session.iterations, history_budget)),
            ("instruction", &session.instruction),
        ],
    )
    .trim_end()
    .to_string()
}

pub fn build_verify_prompt(
    instruction: &str,
    code: &str,
    result: &ExecutionResult,
    snippets: &[Snippet],
    app_description: &str,
) -> String {
    fill(
        VERIFY_TEMPLATE,
        &[
            ("app_description", app_description.trim_end()),
            ("root", ROOT),
            ("context", &render_context(snippets)),
            ("instruction", instruction),
            ("action_code", code),
            ("result", &render_result(result)),
        ],
    )
    .trim_end()
    .to_string()
}

pub fn build_safeguard_prompt(code: &str, rules: &str) -> String {
    fill(SAFEGUARD_TEMPLATE, &[("root", ROOT), ("rules", rules.trim_end()), ("code", code)]).trim_end().to_string()
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}
