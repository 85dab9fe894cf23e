//! Runtime values and heap objects.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use indexmap::IndexMap;
use serde_json::Value as Json;

use crate::ast::{Function, Pos};
use crate::interp::{Interp, R};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct ScopeId(pub(crate) u32);

#[derive(Debug, Clone)]
pub enum Value {
    Undefined,
    Null,
    Bool(bool),
    Num(f64),
    Str(Rc<str>),
    Obj(ObjId),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn is_nullish(&self) -> bool {
        matches!(self, Value::Undefined | Value::Null)
    }

    pub fn as_obj(&self) -> Option<ObjId> {
        match self {
            Value::Obj(id) => Some(*id),
            _ => None,
        }
    }

    /// `===`
    pub fn strict_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Undefined, Value::Undefined) | (Value::Null, Value::Null) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Num(a), Value::Num(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Obj(a), Value::Obj(b)) => a == b,
            _ => false,
        }
    }

    /// SameValueZero, used by `includes`, `Map` and `Set`.
    pub fn same_value_zero(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) if a.is_nan() && b.is_nan() => true,
            _ => self.strict_eq(other),
        }
    }
}

pub(crate) type NativeFn = fn(&mut Interp, &Value, &[Value]) -> R<Value>;

pub(crate) enum Func {
    Closure {
        def: Rc<Function>,
        env: ScopeId,
    },
    Native {
        name: &'static str,
        call: NativeFn,
        construct: Option<NativeFn>,
    },
    Bound {
        target: ObjId,
        this: Value,
        args: Vec<Value>,
    },
    Host {
        path: String,
        bound: Vec<Json>,
    },
    /// `resolve`/`reject` handed to a promise executor.
    Resolver {
        promise: ObjId,
        reject: bool,
        done: Rc<Cell<bool>>,
    },
    /// Per-element callback of `Promise.all` / `Promise.allSettled`.
    Combinator {
        index: usize,
        state: Rc<RefCell<Combine>>,
        settled_kind: Option<&'static str>,
    },
}

pub(crate) struct Combine {
    pub values: Vec<Value>,
    pub remaining: usize,
    pub result: ObjId,
    pub settled: bool,
}

#[derive(Clone)]
pub(crate) enum PState {
    Pending,
    Fulfilled(Value),
    Rejected(Value),
}

pub(crate) struct Reaction {
    pub on_fulfilled: Value,
    pub on_rejected: Value,
    pub derived: Option<ObjId>,
}

pub(crate) struct Promise {
    pub state: PState,
    pub reactions: Vec<Reaction>,
    pub handled: bool,
}

pub(crate) enum ObjKind {
    Ordinary,
    Array {
        items: Vec<Value>,
        /// Host path the array is written back to on mutation.
        bound: Option<String>,
    },
    Function(Func),
    Error {
        pos: Option<Pos>,
    },
    Promise(Promise),
    HostNs(String),
    Map(Vec<(Value, Value)>),
    Set(Vec<Value>),
}

pub(crate) struct Object {
    pub proto: Option<ObjId>,
    pub props: IndexMap<Rc<str>, Value>,
    pub kind: ObjKind,
    pub extensible: bool,
    pub frozen: bool,
}

impl Object {
    pub fn new(proto: Option<ObjId>, kind: ObjKind) -> Self {
        Object {
            proto,
            props: IndexMap::new(),
            kind,
            extensible: true,
            frozen: false,
        }
    }

    pub fn is_callable(&self) -> bool {
        matches!(self.kind, ObjKind::Function(_))
    }
}

/// Property key after conversion.
#[derive(Debug, Clone)]
pub(crate) enum Key {
    Index(u32),
    Name(Rc<str>),
}

impl Key {
    pub fn from_str(s: &str) -> Key {
        match canonical_index(s) {
            Some(i) => Key::Index(i),
            None => Key::Name(Rc::from(s)),
        }
    }

    pub fn from_rc(s: Rc<str>) -> Key {
        match canonical_index(&s) {
            Some(i) => Key::Index(i),
            None => Key::Name(s),
        }
    }

    pub fn name(&self) -> Rc<str> {
        match self {
            Key::Index(i) => Rc::from(i.to_string()),
            Key::Name(n) => n.clone(),
        }
    }

    pub fn is(&self, s: &str) -> bool {
        matches!(self, Key::Name(n) if &**n == s)
    }
}

impl std::fmt::Display for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Key::Index(i) => write!(f, "{i}"),
            Key::Name(n) => write!(f, "{n}"),
        }
    }
}

/// Array index form of a property name (`"3"` but not `"03"`).
pub(crate) fn canonical_index(s: &str) -> Option<u32> {
    if s.is_empty() || s.len() > 10 || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    if !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: u64 = s.parse().ok()?;
    if v < u32::MAX as u64 {
        Some(v as u32)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_keys() {
        assert_eq!(canonical_index("0"), Some(0));
        assert_eq!(canonical_index("42"), Some(42));
        assert_eq!(canonical_index("042"), None);
        assert_eq!(canonical_index("-1"), None);
        assert_eq!(canonical_index("4294967295"), None);
        assert_eq!(canonical_index("1.5"), None);
    }

    #[test]
    fn equality() {
        assert!(Value::Num(f64::NAN).same_value_zero(&Value::Num(f64::NAN)));
        assert!(!Value::Num(f64::NAN).strict_eq(&Value::Num(f64::NAN)));
        assert!(Value::str("a").strict_eq(&Value::str("a")));
        assert!(!Value::Null.strict_eq(&Value::Undefined));
    }
}
