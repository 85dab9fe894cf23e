use std::fmt;

use crate::ast::Pos;

/// Parse-stage failure. No code runs when this is produced.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("SyntaxError: {message} ({pos})")]
pub struct SyntaxError {
    pub message: String,
    pub pos: Pos,
}

impl SyntaxError {
    pub fn new(message: impl Into<String>, pos: Pos) -> Self {
        SyntaxError {
            message: message.into(),
            pos,
        }
    }
}

/// Why a run was cut short by the embedder rather than by script logic.
/// Aborts cannot be caught by `try`/`catch` inside the script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Abort {
    /// A host guard refused an access.
    Denied { reason: String },
    StepBudget { budget: u64 },
    Timeout,
    /// Console output exceeded its byte budget.
    OutputBudget { budget: usize },
    StackDepth { limit: usize },
    HeapLimit { limit: usize },
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Abort::Denied { reason } => write!(f, "access denied: {reason}"),
            Abort::StepBudget { budget } => write!(f, "step budget of {budget} exhausted"),
            Abort::Timeout => write!(f, "execution timed out"),
            Abort::OutputBudget { budget } => {
                write!(f, "console output exceeded {budget} bytes")
            }
            Abort::StackDepth { limit } => {
                write!(f, "Maximum call stack size exceeded (depth {limit})")
            }
            Abort::HeapLimit { limit } => write!(f, "heap limit of {limit} objects exceeded"),
        }
    }
}

/// An uncaught exception, flattened so it can leave the interpreter thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thrown {
    /// Constructor name for error objects (`TypeError`, `Error`, ...);
    /// `None` when a non-error value was thrown.
    pub name: Option<String>,
    pub message: String,
    pub pos: Option<Pos>,
}

impl fmt::Display for Thrown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(name) if self.message.is_empty() => write!(f, "{name}"),
            Some(name) => write!(f, "{name}: {}", self.message),
            None => write!(f, "Uncaught {}", self.message),
        }
    }
}

/// Terminal failure of a script run.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Syntax(SyntaxError),
    #[error("{0}")]
    Thrown(Thrown),
    #[error("{0}")]
    Aborted(Abort),
}
