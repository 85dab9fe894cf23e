//! A small, resource-bounded JavaScript interpreter for running
//! model-generated action scripts against a host application.
//!
//! The engine supports the everyday subset used by such scripts: `let`/`const`,
//! arrow and async functions, destructuring, template literals, optional
//! chaining, `try`/`catch`, promises and the common built-ins. Classes,
//! generators, regular expressions and modules are rejected at parse time or
//! throw when used.
//!
//! Every run is bounded by a step budget, a wall-clock deadline, a console
//! output budget, a call-depth limit and a heap cap. Exceeding any of them
//! yields [`RunError::Aborted`], which the script cannot catch.
//!
//! ```
//! use actscript::{run, Limits, NullHost};
//!
//! let mut host = NullHost::default();
//! let out = run("const xs = [1, 2, 3]; xs.map(x => x * 2)", &mut host, &Limits::default());
//! assert_eq!(out.result.unwrap(), Some(serde_json::json!([2, 4, 6])));
//! ```

pub mod ast;
mod builtins;
mod error;
mod host;
mod inspect;
mod interp;
mod lexer;
mod number;
mod parser;
mod value;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value as Json;

pub use error::{Abort, RunError, SyntaxError, Thrown};
pub use host::{ConsoleLevel, Host, HostError, HostValue, NullHost};
pub use interp::expr_text;
pub use lexer::{Lexer, TokKind, Token};
pub use number::format_number;
pub use parser::parse;

use interp::{Ctrl, Interp};
use value::{PState, Value};

/// Resource limits for one run.
#[derive(Debug, Clone)]
pub struct Limits {
    /// Evaluation steps (roughly one per expression or statement).
    pub step_budget: u64,
    pub wall_timeout: Option<Duration>,
    /// Bytes of console output.
    pub output_budget: usize,
    pub max_call_depth: usize,
    /// Objects allocated by the script, not counting built-ins.
    pub max_objects: usize,
    pub max_string_len: usize,
    pub max_array_len: usize,
    /// Set from another thread to stop the run with [`Abort::Timeout`].
    pub interrupt: Option<Arc<AtomicBool>>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            step_budget: 5_000_000,
            wall_timeout: Some(Duration::from_millis(2000)),
            output_budget: 64 * 1024,
            max_call_depth: 200,
            max_objects: 1_000_000,
            max_string_len: 16 * 1024 * 1024,
            max_array_len: 10_000_000,
            interrupt: None,
        }
    }
}

/// Result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// The completion value of the last top-level expression statement, as
    /// JSON. `None` when it was `undefined`. A settled promise is unwrapped.
    pub result: Result<Option<Json>, RunError>,
    pub steps: u64,
}

/// Parses and runs `src`.
pub fn run(src: &str, host: &mut dyn Host, limits: &Limits) -> Outcome {
    match parse(src) {
        Ok(prog) => run_program(&prog, host, limits),
        Err(e) => Outcome {
            result: Err(RunError::Syntax(e)),
            steps: 0,
        },
    }
}

/// Runs an already parsed program.
pub fn run_program(prog: &ast::Program, host: &mut dyn Host, limits: &Limits) -> Outcome {
    let mut it = Interp::new(host, limits.clone());
    let result = match it.run_program(prog).and_then(|v| settle(&mut it, v)) {
        Ok(Value::Undefined) => Ok(None),
        Ok(v) => match it.to_json(&v) {
            Ok(j) => Ok(Some(j)),
            Err(c) => Err(ctrl_error(&mut it, c)),
        },
        Err(c) => Err(ctrl_error(&mut it, c)),
    };
    Outcome {
        result,
        steps: it.steps,
    }
}

fn settle(it: &mut Interp, v: Value) -> Result<Value, Ctrl> {
    match it.is_promise(&v).and_then(|p| it.promise_state(p)) {
        Some(PState::Fulfilled(x)) => Ok(x),
        Some(PState::Rejected(e)) => Err(Ctrl::Throw(e)),
        Some(PState::Pending) => Ok(Value::Undefined),
        None => Ok(v),
    }
}

fn ctrl_error(it: &mut Interp, c: Ctrl) -> RunError {
    match c {
        Ctrl::Throw(v) => RunError::Thrown(it.flatten_thrown(&v)),
        Ctrl::Abort(a) => RunError::Aborted(a),
    }
}
