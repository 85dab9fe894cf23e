//! Boundary between the engine and the embedding application.

use serde_json::Value as Json;

use crate::error::Abort;

/// A value handed from the host to the script.
#[derive(Debug, Clone, PartialEq)]
pub enum HostValue {
    Undefined,
    Json(Json),
    /// A live object whose properties are resolved through [`Host::get`].
    Namespace(String),
    /// A callable that forwards to [`Host::call`] with `bound` prepended to the
    /// script's arguments.
    Method { path: String, bound: Vec<Json> },
    /// A plain object with host-provided members (e.g. a UI node handle).
    Object(Vec<(String, HostValue)>),
    /// An array whose element writes are written back with [`Host::set`].
    BoundArray { path: String, items: Vec<Json> },
    /// An array of host values (e.g. UI node handles).
    List(Vec<HostValue>),
    /// An already-resolved promise.
    Resolved(Box<HostValue>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HostError {
    /// Surfaces as a `TypeError` inside the script.
    #[error("TypeError: {0}")]
    Type(String),
    /// Surfaces as a plain `Error` inside the script.
    #[error("Error: {0}")]
    Domain(String),
    /// Stops the run; cannot be caught by the script.
    #[error("denied: {0}")]
    Denied(String),
    #[error("{0}")]
    Abort(Abort),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsoleLevel {
    Log,
    Info,
    Debug,
    Warn,
    Error,
}

impl ConsoleLevel {
    pub fn is_error(self) -> bool {
        matches!(self, ConsoleLevel::Warn | ConsoleLevel::Error)
    }
}

/// Services the engine needs from its embedder. Paths are dotted
/// (`app.player.volume`).
pub trait Host {
    /// Called before an unbound global identifier is resolved. Returning
    /// [`HostError::Denied`] aborts the run.
    fn check_global(&mut self, _name: &str) -> Result<(), HostError> {
        Ok(())
    }
    /// Resolves a global that is not a built-in. `None` means undefined.
    fn global(&mut self, _name: &str) -> Result<Option<HostValue>, HostError> {
        Ok(None)
    }
    fn get(&mut self, path: &str) -> Result<HostValue, HostError>;
    fn set(&mut self, path: &str, value: Json) -> Result<(), HostError>;
    fn call(&mut self, path: &str, args: Vec<Json>) -> Result<HostValue, HostError>;
    fn keys(&mut self, path: &str) -> Result<Vec<String>, HostError>;
    fn console(&mut self, level: ConsoleLevel, line: &str);
}

/// A host with no bindings that collects console output.
#[derive(Debug, Default)]
pub struct NullHost {
    pub lines: Vec<(ConsoleLevel, String)>,
}

impl Host for NullHost {
    fn get(&mut self, _path: &str) -> Result<HostValue, HostError> {
        Ok(HostValue::Undefined)
    }
    fn set(&mut self, path: &str, _value: Json) -> Result<(), HostError> {
        Err(HostError::Type(format!("Cannot assign to '{path}'")))
    }
    fn call(&mut self, path: &str, _args: Vec<Json>) -> Result<HostValue, HostError> {
        Err(HostError::Type(format!("{path} is not a function")))
    }
    fn keys(&mut self, _path: &str) -> Result<Vec<String>, HostError> {
        Ok(Vec::new())
    }
    fn console(&mut self, level: ConsoleLevel, line: &str) {
        self.lines.push((level, line.to_string()));
    }
}
