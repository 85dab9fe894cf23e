//! Runs action code against a working copy of the host state, behind the
//! runtime guard and the resource limits. A run that does not finish `ok`
//! leaves the state untouched.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use actscript::{Abort, ConsoleLevel, Host, HostError, HostValue, Limits, RunError};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use crate::host::{apply, children, diff, namespaces, BridgeCall, HostState, StateDiff, ROOT};
use crate::safety::{Guard, GuardDecision};

/// Language tags accepted for action code.
pub const LANGUAGES: [&str; 2] = ["js", "javascript"];

const THREAD_STACK: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCode {
    pub tag: String,
    pub source: String,
    /// Hex sha256 of `source`.
    pub hash: String,
}

impl ActionCode {
    pub fn new(tag: impl Into<String>, source: impl Into<String>) -> ActionCode {
        let source = source.into();
        let hash = hex::encode(Sha256::digest(source.as_bytes()));
        ActionCode { tag: tag.into(), source, hash }
    }

    pub fn js(source: impl Into<String>) -> ActionCode {
        ActionCode::new("js", source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub wall_timeout_ms: u64,
    pub step_budget: u64,
    pub output_budget: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits { wall_timeout_ms: 2000, step_budget: 5_000_000, output_budget: 64 * 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Denied,
    Timeout,
    ResourceExhausted,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Ok => "ok",
            ExecStatus::RuntimeError => "runtime_error",
            ExecStatus::Denied => "denied",
            ExecStatus::Timeout => "timeout",
            ExecStatus::ResourceExhausted => "resource_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    #[serde(rename = "TypeError-like")]
    TypeError,
    #[serde(rename = "ReferenceError-like")]
    ReferenceError,
    #[serde(rename = "ThrownValue")]
    ThrownValue,
    #[serde(rename = "SyntaxError-like")]
    SyntaxError,
    #[serde(rename = "GuardDenied")]
    GuardDenied,
    #[serde(rename = "LimitExceeded")]
    LimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: ErrorKind,
    pub message: String,
    /// How the error reads in a console, e.g. `TypeError: x is undefined`.
    pub text: String,
    /// `line:col` in the action code, when known.
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub return_value: Option<Json>,
    /// Console lines in order; warnings and errors carry a `[warn] ` or
    /// `[error] ` prefix.
    pub console: Vec<String>,
    pub error: Option<ErrorReport>,
    pub state_diff: StateDiff,
    pub duration_ms: u64,
}

impl ExecutionResult {
    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    /// Console lines written at warn or error level.
    pub fn console_errors(&self) -> impl Iterator<Item = &str> {
        self.console
            .iter()
            .filter_map(|l| l.strip_prefix("[error] ").or_else(|| l.strip_prefix("[warn] ")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SandboxError {
    #[error("unsupported action code language '{0}'")]
    UnsupportedLanguage(String),
}

/// Host adapter that routes every bridge access through the guard before
/// applying it to the working state.
struct BridgeHost {
    state: HostState,
    guard: Guard,
    console: Vec<String>,
}

impl BridgeHost {
    fn guarded(&mut self, call: BridgeCall) -> Result<HostValue, HostError> {
        if let GuardDecision::Deny(reason) = self.guard.check(&call) {
            return Err(HostError::Denied(format!("{} {}: {reason}", verb(&call), call.path)));
        }
        apply(&mut self.state, &call).map_err(HostError::from)
    }
}

fn verb(call: &BridgeCall) -> &'static str {
    match call.kind {
        crate::host::CallKind::Get => "read",
        crate::host::CallKind::Set(_) => "write",
        crate::host::CallKind::Invoke(_) => "call",
    }
}

impl Host for BridgeHost {
    fn check_global(&mut self, name: &str) -> Result<(), HostError> {
        match self.guard.check_global(name) {
            GuardDecision::Allow => Ok(()),
            GuardDecision::Deny(r) => Err(HostError::Denied(format!("global {name}: {r}"))),
        }
    }

    fn global(&mut self, name: &str) -> Result<Option<HostValue>, HostError> {
        if name != ROOT {
            return Ok(None);
        }
        self.guarded(BridgeCall::get(ROOT)).map(Some)
    }

    fn get(&mut self, path: &str) -> Result<HostValue, HostError> {
        self.guarded(BridgeCall::get(path))
    }

    fn set(&mut self, path: &str, value: Json) -> Result<(), HostError> {
        self.guarded(BridgeCall::set(path, value)).map(|_| ())
    }

    fn call(&mut self, path: &str, args: Vec<Json>) -> Result<HostValue, HostError> {
        self.guarded(BridgeCall::invoke(path, args))
    }

    fn keys(&mut self, path: &str) -> Result<Vec<String>, HostError> {
        if !namespaces().contains(&path) {
            return Ok(Vec::new());
        }
        let mut ks = children(path);
        ks.sort();
        ks.dedup();
        Ok(ks)
    }

    fn console(&mut self, level: ConsoleLevel, line: &str) {
        self.console.push(match level {
            ConsoleLevel::Warn => format!("[warn] {line}"),
            ConsoleLevel::Error => format!("[error] {line}"),
            _ => line.to_string(),
        });
    }
}

fn classify(e: &RunError) -> (ExecStatus, ErrorReport) {
    let report = |kind, message: String, text: String, location: Option<String>| ErrorReport {
        kind,
        message,
        text,
        location,
    };
    match e {
        RunError::Syntax(s) => (
            ExecStatus::RuntimeError,
            report(ErrorKind::SyntaxError, s.message.clone(), format!("SyntaxError: {}", s.message), Some(s.pos.to_string())),
        ),
        RunError::Thrown(t) => {
            let kind = match t.name.as_deref() {
                Some("TypeError") => ErrorKind::TypeError,
                Some("ReferenceError") => ErrorKind::ReferenceError,
                Some("SyntaxError") => ErrorKind::SyntaxError,
                _ => ErrorKind::ThrownValue,
            };
            let text = match &t.name {
                Some(n) if t.message.is_empty() => n.clone(),
                Some(n) => format!("{n}: {}", t.message),
                None => format!("Uncaught {}", t.message),
            };
            (ExecStatus::RuntimeError, report(kind, t.message.clone(), text, t.pos.map(|p| p.to_string())))
        }
        RunError::Aborted(a) => {
            let (status, kind) = match a {
                Abort::Denied { .. } => (ExecStatus::Denied, ErrorKind::GuardDenied),
                Abort::Timeout => (ExecStatus::Timeout, ErrorKind::LimitExceeded),
                _ => (ExecStatus::ResourceExhausted, ErrorKind::LimitExceeded),
            };
            let message = match a {
                Abort::Denied { reason } => reason.clone(),
                other => other.to_string(),
            };
            (status, report(kind, message.clone(), message, None))
        }
    }
}

/// Runs `code` against a working copy of `state`. Returns the state to keep
/// (the working copy when the run was `ok`, otherwise `state` unchanged)
/// together with the result.
pub fn execute(
    code: &ActionCode,
    state: &HostState,
    limits: &ResourceLimits,
    guard: Guard,
) -> Result<(HostState, ExecutionResult), SandboxError> {
    if !LANGUAGES.contains(&code.tag.to_ascii_lowercase().as_str()) {
        return Err(SandboxError::UnsupportedLanguage(code.tag.clone()));
    }
    let started = Instant::now();
    let wall = Duration::from_millis(limits.wall_timeout_ms);
    let interrupt = Arc::new(AtomicBool::new(false));
    let engine_limits = Limits {
        step_budget: limits.step_budget,
        wall_timeout: Some(wall),
        output_budget: limits.output_budget,
        interrupt: Some(interrupt.clone()),
        ..Limits::default()
    };
    let source = code.source.clone();
    let mut host = BridgeHost { state: state.clone(), guard, console: Vec::new() };
    let (tx, rx) = mpsc::channel();
    let worker = thread::Builder::new()
        .name("actagent-sandbox".into())
        .stack_size(THREAD_STACK)
        .spawn(move || {
            let out = actscript::run(&source, &mut host, &engine_limits);
            let _ = tx.send((out, host));
        })
        .expect("spawn sandbox thread");
    // The engine watches its own deadline; the interrupt is a backstop for
    // host calls that overrun it.
    let (outcome, host) = match rx.recv_timeout(wall + Duration::from_millis(50)) {
        Ok(v) => v,
        Err(_) => {
            interrupt.store(true, Ordering::SeqCst);
            rx.recv().expect("sandbox thread reports")
        }
    };
    let _ = worker.join();
    let duration_ms = started.elapsed().as_millis() as u64;

    let mut result = ExecutionResult {
        status: ExecStatus::Ok,
        return_value: None,
        console: host.console,
        error: None,
        state_diff: StateDiff::default(),
        duration_ms,
    };
    match outcome.result {
        Ok(v) => match host.state.validate() {
            Ok(()) => {
                result.return_value = v;
                result.state_diff = diff(state, &host.state);
                return Ok((host.state, result));
            }
            Err(e) => {
                result.status = ExecStatus::RuntimeError;
                result.error = Some(ErrorReport {
                    kind: ErrorKind::ThrownValue,
                    message: e.to_string(),
                    text: format!("Error: {e}"),
                    location: None,
                });
            }
        },
        Err(e) => {
            let (status, report) = classify(&e);
            result.status = status;
            result.error = Some(report);
        }
    }
    Ok((state.clone(), result))
}
