//! Tree-walking evaluator.

#![allow(clippy::wrong_self_convention)]

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet, VecDeque};
use std::rc::Rc;
use std::sync::atomic::Ordering;
use std::time::Instant;

use indexmap::IndexMap;
use serde_json::Value as Json;

use crate::ast::*;
use crate::error::{Abort, Thrown};
use crate::host::{ConsoleLevel, Host, HostError, HostValue};
use crate::number::{format_number, string_to_number, to_int32, to_uint32};
use crate::value::*;
use crate::Limits;

pub(crate) type R<T> = Result<T, Ctrl>;

#[derive(Debug)]
pub(crate) enum Ctrl {
    Throw(Value),
    Abort(Abort),
}

enum Flow {
    Normal,
    Return(Value),
    Break(Option<String>),
    Continue(Option<String>),
}

#[derive(Clone, Copy)]
enum Bind {
    /// `let`/`const`/parameter initialization in the current scope.
    Init { mutable: bool },
    /// `var` initialization (binding already hoisted).
    Var,
    /// Plain assignment to existing bindings or properties.
    Assign,
}

struct Binding {
    value: Value,
    mutable: bool,
    init: bool,
    lexical: bool,
}

struct Scope {
    vars: Vec<(Rc<str>, Binding)>,
    parent: Option<ScopeId>,
    this: Option<Value>,
    is_func: bool,
    captured: bool,
}

pub(crate) struct Protos {
    pub object: ObjId,
    pub function: ObjId,
    pub array: ObjId,
    pub string: ObjId,
    pub number: ObjId,
    pub boolean: ObjId,
    pub error: ObjId,
    pub type_error: ObjId,
    pub reference_error: ObjId,
    pub syntax_error: ObjId,
    pub range_error: ObjId,
    pub promise: ObjId,
    pub map: ObjId,
    pub set: ObjId,
}

pub(crate) enum Job {
    React {
        handler: Value,
        arg: Value,
        derived: Option<ObjId>,
        rejected: bool,
    },
    Thenable {
        then: Value,
        thenable: Value,
        promise: ObjId,
    },
}

enum Callee {
    Closure(Rc<Function>, ScopeId),
    Native(NativeFn, Option<NativeFn>),
    Bound(ObjId, Value, Vec<Value>),
    Host(String, Vec<Json>),
    Resolver(ObjId, bool, Rc<Cell<bool>>),
    Combinator(usize, Rc<RefCell<Combine>>, Option<&'static str>),
}

pub struct Interp<'h> {
    pub(crate) host: &'h mut dyn Host,
    pub(crate) heap: Vec<Object>,
    scopes: Vec<Scope>,
    free_scopes: Vec<ScopeId>,
    scope: ScopeId,
    pub(crate) globals: HashMap<&'static str, Value>,
    pub(crate) protos: Protos,
    pub(crate) limits: Limits,
    deadline: Option<Instant>,
    pub(crate) steps: u64,
    depth: usize,
    pub(crate) output_bytes: usize,
    pub(crate) jobs: VecDeque<Job>,
    host_objects: HashMap<String, ObjId>,
    checked_globals: HashSet<String>,
    pub(crate) cur_pos: Pos,
    throw_pos: Option<Pos>,
    var_cache: HashMap<*const Function, Rc<Vec<Rc<str>>>>,
    pub(crate) rejected: Vec<ObjId>,
    heap_base: usize,
    /// Value of the most recent expression statement outside any function.
    completion: Value,
}

fn abort<T>(a: Abort) -> R<T> {
    Err(Ctrl::Abort(a))
}

impl<'h> Interp<'h> {
    pub fn new(host: &'h mut dyn Host, limits: Limits) -> Self {
        let placeholder = ObjId(0);
        let mut it = Interp {
            host,
            heap: Vec::new(),
            scopes: Vec::new(),
            free_scopes: Vec::new(),
            scope: ScopeId(0),
            globals: HashMap::new(),
            protos: Protos {
                object: placeholder,
                function: placeholder,
                array: placeholder,
                string: placeholder,
                number: placeholder,
                boolean: placeholder,
                error: placeholder,
                type_error: placeholder,
                reference_error: placeholder,
                syntax_error: placeholder,
                range_error: placeholder,
                promise: placeholder,
                map: placeholder,
                set: placeholder,
            },
            limits,
            deadline: None,
            steps: 0,
            depth: 0,
            output_bytes: 0,
            jobs: VecDeque::new(),
            host_objects: HashMap::new(),
            checked_globals: HashSet::new(),
            cur_pos: Pos::default(),
            throw_pos: None,
            var_cache: HashMap::new(),
            rejected: Vec::new(),
            heap_base: usize::MAX / 2,
            completion: Value::Undefined,
        };
        it.scope = it.new_scope(None, true, Some(Value::Undefined));
        crate::builtins::install(&mut it);
        it.heap_base = it.heap.len();
        it
    }

    // ---- budget ---------------------------------------------------------

    #[inline]
    pub(crate) fn tick(&mut self) -> R<()> {
        self.charge(1)
    }

    pub(crate) fn charge(&mut self, n: u64) -> R<()> {
        let before = self.steps;
        self.steps = self.steps.saturating_add(n);
        if self.steps > self.limits.step_budget {
            return abort(Abort::StepBudget {
                budget: self.limits.step_budget,
            });
        }
        if before >> 12 != self.steps >> 12 {
            self.check_clock()?;
        }
        Ok(())
    }

    fn check_clock(&mut self) -> R<()> {
        if let Some(flag) = &self.limits.interrupt {
            if flag.load(Ordering::Relaxed) {
                return abort(Abort::Timeout);
            }
        }
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                return abort(Abort::Timeout);
            }
        }
        Ok(())
    }

    pub(crate) fn check_string_len(&mut self, len: usize) -> R<()> {
        if len > self.limits.max_string_len {
            return self.range_error("Invalid string length");
        }
        Ok(())
    }

    // ---- heap -----------------------------------------------------------

    pub(crate) fn alloc(&mut self, obj: Object) -> R<ObjId> {
        if self.heap.len() >= self.heap_base.saturating_add(self.limits.max_objects) {
            return abort(Abort::HeapLimit {
                limit: self.limits.max_objects,
            });
        }
        self.heap.push(obj);
        Ok(ObjId(self.heap.len() as u32 - 1))
    }

    pub(crate) fn obj(&self, id: ObjId) -> &Object {
        &self.heap[id.0 as usize]
    }

    pub(crate) fn obj_mut(&mut self, id: ObjId) -> &mut Object {
        &mut self.heap[id.0 as usize]
    }

    pub(crate) fn new_object(&mut self) -> R<ObjId> {
        let proto = self.protos.object;
        self.alloc(Object::new(Some(proto), ObjKind::Ordinary))
    }

    pub(crate) fn new_array(&mut self, items: Vec<Value>) -> R<Value> {
        if items.len() > self.limits.max_array_len {
            return self.range_error("Invalid array length");
        }
        let proto = self.protos.array;
        let id = self.alloc(Object::new(
            Some(proto),
            ObjKind::Array { items, bound: None },
        ))?;
        Ok(Value::Obj(id))
    }

    pub(crate) fn new_function(&mut self, f: Func) -> R<ObjId> {
        let proto = self.protos.function;
        self.alloc(Object::new(Some(proto), ObjKind::Function(f)))
    }

    pub(crate) fn new_native(
        &mut self,
        name: &'static str,
        call: NativeFn,
        construct: Option<NativeFn>,
    ) -> R<ObjId> {
        self.new_function(Func::Native {
            name,
            call,
            construct,
        })
    }

    pub(crate) fn array_items(&self, v: &Value) -> Option<&Vec<Value>> {
        match v {
            Value::Obj(id) => match &self.obj(*id).kind {
                ObjKind::Array { items, .. } => Some(items),
                _ => None,
            },
            _ => None,
        }
    }

    pub(crate) fn is_callable(&self, v: &Value) -> bool {
        matches!(v, Value::Obj(id) if self.obj(*id).is_callable())
    }

    // ---- errors ---------------------------------------------------------

    pub(crate) fn make_error(&mut self, proto: ObjId, msg: &str) -> R<Value> {
        let mut o = Object::new(
            Some(proto),
            ObjKind::Error {
                pos: Some(self.cur_pos),
            },
        );
        o.props.insert(Rc::from("message"), Value::str(msg));
        let id = self.alloc(o)?;
        Ok(Value::Obj(id))
    }

    fn throw_with<T>(&mut self, proto: ObjId, msg: String) -> R<T> {
        let e = self.make_error(proto, &msg)?;
        Err(Ctrl::Throw(e))
    }

    pub(crate) fn type_error<T>(&mut self, msg: impl Into<String>) -> R<T> {
        let p = self.protos.type_error;
        self.throw_with(p, msg.into())
    }

    pub(crate) fn reference_error<T>(&mut self, msg: impl Into<String>) -> R<T> {
        let p = self.protos.reference_error;
        self.throw_with(p, msg.into())
    }

    pub(crate) fn range_error<T>(&mut self, msg: impl Into<String>) -> R<T> {
        let p = self.protos.range_error;
        self.throw_with(p, msg.into())
    }

    pub(crate) fn syntax_error<T>(&mut self, msg: impl Into<String>) -> R<T> {
        let p = self.protos.syntax_error;
        self.throw_with(p, msg.into())
    }

    pub(crate) fn plain_error<T>(&mut self, msg: impl Into<String>) -> R<T> {
        let p = self.protos.error;
        self.throw_with(p, msg.into())
    }

    pub(crate) fn host_err(&mut self, e: HostError) -> Ctrl {
        let made = match e {
            HostError::Type(m) => {
                let p = self.protos.type_error;
                self.make_error(p, &m)
            }
            HostError::Domain(m) => {
                let p = self.protos.error;
                self.make_error(p, &m)
            }
            HostError::Denied(reason) => return Ctrl::Abort(Abort::Denied { reason }),
            HostError::Abort(a) => return Ctrl::Abort(a),
        };
        match made {
            Ok(v) => Ctrl::Throw(v),
            Err(c) => c,
        }
    }

    /// Converts an uncaught value into a transportable description.
    pub(crate) fn flatten_thrown(&mut self, v: &Value) -> Thrown {
        if let Value::Obj(id) = v {
            let pos = match &self.obj(*id).kind {
                ObjKind::Error { pos } => Some(*pos),
                _ => None,
            };
            if let Some(pos) = pos {
                let name = self
                    .get(v, &Key::from_str("name"))
                    .ok()
                    .and_then(|n| self.to_string(&n).ok())
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "Error".into());
                let message = self
                    .get(v, &Key::from_str("message"))
                    .ok()
                    .and_then(|m| self.to_string(&m).ok())
                    .map(|s| s.to_string())
                    .unwrap_or_default();
                return Thrown {
                    name: Some(name),
                    message,
                    pos: pos.or(self.throw_pos),
                };
            }
        }
        let message = crate::inspect::inspect(self, v, true).unwrap_or_else(|_| "<value>".into());
        Thrown {
            name: None,
            message,
            pos: self.throw_pos,
        }
    }

    // ---- scopes ---------------------------------------------------------

    fn new_scope(&mut self, parent: Option<ScopeId>, is_func: bool, this: Option<Value>) -> ScopeId {
        let scope = Scope {
            vars: Vec::new(),
            parent,
            this,
            is_func,
            captured: false,
        };
        if let Some(id) = self.free_scopes.pop() {
            self.scopes[id.0 as usize] = scope;
            id
        } else {
            self.scopes.push(scope);
            ScopeId(self.scopes.len() as u32 - 1)
        }
    }

    fn release_scope(&mut self, id: ScopeId) {
        let s = &mut self.scopes[id.0 as usize];
        if !s.captured {
            s.vars.clear();
            s.this = None;
            self.free_scopes.push(id);
        }
    }

    fn mark_captured(&mut self, mut id: ScopeId) {
        loop {
            let s = &mut self.scopes[id.0 as usize];
            if s.captured {
                return;
            }
            s.captured = true;
            match s.parent {
                Some(p) => id = p,
                None => return,
            }
        }
    }

    fn lookup(&self, name: &str) -> Option<(ScopeId, usize)> {
        let mut cur = Some(self.scope);
        while let Some(id) = cur {
            let s = &self.scopes[id.0 as usize];
            if let Some(i) = s.vars.iter().position(|(n, _)| &**n == name) {
                return Some((id, i));
            }
            cur = s.parent;
        }
        None
    }

    fn declare(
        &mut self,
        scope: ScopeId,
        name: &str,
        value: Value,
        mutable: bool,
        init: bool,
        lexical: bool,
    ) -> R<()> {
        let s = &mut self.scopes[scope.0 as usize];
        if let Some((_, b)) = s.vars.iter_mut().find(|(n, _)| &**n == name) {
            if lexical || b.lexical {
                return self.syntax_error(format!("Identifier '{name}' has already been declared"));
            }
            if init {
                b.value = value;
            }
            return Ok(());
        }
        s.vars.push((
            Rc::from(name),
            Binding {
                value,
                mutable,
                init,
                lexical,
            },
        ));
        Ok(())
    }

    fn func_scope(&self) -> ScopeId {
        let mut id = self.scope;
        loop {
            let s = &self.scopes[id.0 as usize];
            if s.is_func {
                return id;
            }
            id = s.parent.expect("global scope is a function scope");
        }
    }

    fn this_value(&self) -> Value {
        let mut cur = Some(self.scope);
        while let Some(id) = cur {
            let s = &self.scopes[id.0 as usize];
            if let Some(t) = &s.this {
                return t.clone();
            }
            cur = s.parent;
        }
        Value::Undefined
    }

    // ---- globals --------------------------------------------------------

    fn global_lookup(&mut self, name: &str) -> R<Option<Value>> {
        if !self.checked_globals.contains(name) {
            self.host.check_global(name).map_err(|e| self.host_err(e))?;
            self.checked_globals.insert(name.to_string());
        }
        match name {
            "undefined" => return Ok(Some(Value::Undefined)),
            "NaN" => return Ok(Some(Value::Num(f64::NAN))),
            "Infinity" => return Ok(Some(Value::Num(f64::INFINITY))),
            _ => {}
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(Some(v.clone()));
        }
        match self.host.global(name).map_err(|e| self.host_err(e))? {
            Some(hv) => Ok(Some(self.from_host(hv)?)),
            None => Ok(None),
        }
    }

    fn read_ident(&mut self, name: &str) -> R<Value> {
        if let Some((s, i)) = self.lookup(name) {
            let b = &self.scopes[s.0 as usize].vars[i].1;
            if !b.init {
                return self.reference_error(format!("Cannot access '{name}' before initialization"));
            }
            return Ok(b.value.clone());
        }
        match self.global_lookup(name)? {
            Some(v) => Ok(v),
            None => self.reference_error(format!("{name} is not defined")),
        }
    }

    fn assign_ident(&mut self, name: &str, value: Value) -> R<()> {
        if let Some((s, i)) = self.lookup(name) {
            let b = &mut self.scopes[s.0 as usize].vars[i].1;
            if !b.init {
                return self.reference_error(format!("Cannot access '{name}' before initialization"));
            }
            if !b.mutable {
                return self.type_error("Assignment to constant variable.");
            }
            b.value = value;
            return Ok(());
        }
        match self.global_lookup(name)? {
            Some(_) => self.type_error(format!("Cannot assign to read only global '{name}'")),
            None => self.reference_error(format!("{name} is not defined")),
        }
    }

    // ---- host values ----------------------------------------------------

    pub(crate) fn from_host(&mut self, hv: HostValue) -> R<Value> {
        Ok(match hv {
            HostValue::Undefined => Value::Undefined,
            HostValue::Json(j) => self.from_json(&j)?,
            HostValue::Namespace(path) => {
                if let Some(id) = self.host_objects.get(&path) {
                    return Ok(Value::Obj(*id));
                }
                let proto = self.protos.object;
                let id = self.alloc(Object::new(Some(proto), ObjKind::HostNs(path.clone())))?;
                self.host_objects.insert(path, id);
                Value::Obj(id)
            }
            HostValue::Method { path, bound } => {
                if bound.is_empty() {
                    let key = format!("fn:{path}");
                    if let Some(id) = self.host_objects.get(&key) {
                        return Ok(Value::Obj(*id));
                    }
                    let id = self.new_function(Func::Host { path, bound })?;
                    self.host_objects.insert(key, id);
                    Value::Obj(id)
                } else {
                    Value::Obj(self.new_function(Func::Host { path, bound })?)
                }
            }
            HostValue::Object(fields) => {
                let id = self.new_object()?;
                for (k, v) in fields {
                    let v = self.from_host(v)?;
                    self.obj_mut(id).props.insert(Rc::from(k.as_str()), v);
                }
                Value::Obj(id)
            }
            HostValue::BoundArray { path, items } => {
                let mut vals = Vec::with_capacity(items.len());
                for j in &items {
                    vals.push(self.from_json(j)?);
                }
                let proto = self.protos.array;
                let id = self.alloc(Object::new(
                    Some(proto),
                    ObjKind::Array {
                        items: vals,
                        bound: Some(path),
                    },
                ))?;
                Value::Obj(id)
            }
            HostValue::List(items) => {
                let mut vals = Vec::with_capacity(items.len());
                for hv in items {
                    vals.push(self.from_host(hv)?);
                }
                self.new_array(vals)?
            }
            HostValue::Resolved(inner) => {
                let v = self.from_host(*inner)?;
                let p = self.new_promise()?;
                self.resolve_promise(p, v)?;
                Value::Obj(p)
            }
        })
    }

    pub(crate) fn from_json(&mut self, j: &Json) -> R<Value> {
        Ok(match j {
            Json::Null => Value::Null,
            Json::Bool(b) => Value::Bool(*b),
            Json::Number(n) => Value::Num(n.as_f64().unwrap_or(f64::NAN)),
            Json::String(s) => Value::str(s),
            Json::Array(a) => {
                let mut items = Vec::with_capacity(a.len());
                for x in a {
                    items.push(self.from_json(x)?);
                }
                self.new_array(items)?
            }
            Json::Object(m) => {
                let id = self.new_object()?;
                for (k, x) in m {
                    let v = self.from_json(x)?;
                    self.obj_mut(id).props.insert(Rc::from(k.as_str()), v);
                }
                Value::Obj(id)
            }
        })
    }

    /// JSON view of a value for the host boundary. Functions and `undefined`
    /// become `null` in arrays and are dropped from objects.
    pub(crate) fn to_json(&mut self, v: &Value) -> R<Json> {
        let mut stack = Vec::new();
        self.to_json_inner(v, &mut stack)
    }

    fn to_json_inner(&mut self, v: &Value, stack: &mut Vec<ObjId>) -> R<Json> {
        Ok(match v {
            Value::Undefined | Value::Null => Json::Null,
            Value::Bool(b) => Json::Bool(*b),
            Value::Num(n) => num_to_json(*n),
            Value::Str(s) => Json::String(s.to_string()),
            Value::Obj(id) => {
                if stack.contains(id) {
                    return self.type_error("Converting circular structure to JSON");
                }
                if stack.len() > 64 {
                    return self.range_error("Maximum JSON nesting depth exceeded");
                }
                stack.push(*id);
                let out = match &self.obj(*id).kind {
                    ObjKind::Array { items, .. } => {
                        let items = items.clone();
                        let mut out = Vec::with_capacity(items.len());
                        for x in &items {
                            if self.is_callable(x) {
                                out.push(Json::Null);
                            } else {
                                out.push(self.to_json_inner(x, stack)?);
                            }
                        }
                        Json::Array(out)
                    }
                    ObjKind::Function(_) => Json::Null,
                    ObjKind::HostNs(path) => {
                        let path = path.clone();
                        let keys = self.host.keys(&path).map_err(|e| self.host_err(e))?;
                        let mut m = serde_json::Map::new();
                        for k in keys {
                            let x = self.get(v, &Key::from_str(&k))?;
                            if x.is_nullish() && matches!(x, Value::Undefined) || self.is_callable(&x) {
                                continue;
                            }
                            let j = self.to_json_inner(&x, stack)?;
                            m.insert(k, j);
                        }
                        Json::Object(m)
                    }
                    _ => {
                        let entries: Vec<(Rc<str>, Value)> = self
                            .obj(*id)
                            .props
                            .iter()
                            .map(|(k, v)| (k.clone(), v.clone()))
                            .collect();
                        let mut m = serde_json::Map::new();
                        for (k, x) in entries {
                            if matches!(x, Value::Undefined) || self.is_callable(&x) {
                                continue;
                            }
                            let j = self.to_json_inner(&x, stack)?;
                            m.insert(k.to_string(), j);
                        }
                        Json::Object(m)
                    }
                };
                stack.pop();
                out
            }
        })
    }

    fn sync_bound(&mut self, id: ObjId) -> R<()> {
        let (path, items) = match &self.obj(id).kind {
            ObjKind::Array {
                bound: Some(path),
                items,
            } => (path.clone(), items.clone()),
            _ => return Ok(()),
        };
        let mut arr = Vec::with_capacity(items.len());
        for x in &items {
            arr.push(self.to_json(x)?);
        }
        self.host
            .set(&path, Json::Array(arr))
            .map_err(|e| self.host_err(e))
    }

    /// Call after a built-in mutates an array in place.
    pub(crate) fn array_changed(&mut self, id: ObjId) -> R<()> {
        self.sync_bound(id)
    }

    pub(crate) fn console(&mut self, level: ConsoleLevel, line: String) -> R<()> {
        self.output_bytes += line.len() + 1;
        if self.output_bytes > self.limits.output_budget {
            return abort(Abort::OutputBudget {
                budget: self.limits.output_budget,
            });
        }
        self.host.console(level, &line);
        Ok(())
    }

    // ---- conversions ----------------------------------------------------

    pub(crate) fn truthy(&self, v: &Value) -> bool {
        match v {
            Value::Undefined | Value::Null => false,
            Value::Bool(b) => *b,
            Value::Num(n) => *n != 0.0 && !n.is_nan(),
            Value::Str(s) => !s.is_empty(),
            Value::Obj(_) => true,
        }
    }

    pub(crate) fn type_of(&self, v: &Value) -> &'static str {
        match v {
            Value::Undefined => "undefined",
            Value::Null => "object",
            Value::Bool(_) => "boolean",
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Obj(id) if self.obj(*id).is_callable() => "function",
            Value::Obj(_) => "object",
        }
    }

    pub(crate) fn to_primitive(&mut self, v: &Value, prefer_string: bool) -> R<Value> {
        let Value::Obj(_) = v else {
            return Ok(v.clone());
        };
        let order = if prefer_string {
            ["toString", "valueOf"]
        } else {
            ["valueOf", "toString"]
        };
        for m in order {
            let f = self.get(v, &Key::from_str(m))?;
            if self.is_callable(&f) {
                let r = self.call(&f, v.clone(), Vec::new())?;
                if !matches!(r, Value::Obj(_)) {
                    return Ok(r);
                }
            }
        }
        self.type_error("Cannot convert object to primitive value")
    }

    pub(crate) fn to_string(&mut self, v: &Value) -> R<Rc<str>> {
        Ok(match v {
            Value::Undefined => Rc::from("undefined"),
            Value::Null => Rc::from("null"),
            Value::Bool(b) => Rc::from(if *b { "true" } else { "false" }),
            Value::Num(n) => Rc::from(format_number(*n)),
            Value::Str(s) => s.clone(),
            Value::Obj(_) => {
                let p = self.to_primitive(v, true)?;
                self.to_string(&p)?
            }
        })
    }

    pub(crate) fn to_number(&mut self, v: &Value) -> R<f64> {
        Ok(match v {
            Value::Undefined => f64::NAN,
            Value::Null => 0.0,
            Value::Bool(b) => *b as u8 as f64,
            Value::Num(n) => *n,
            Value::Str(s) => string_to_number(s),
            Value::Obj(_) => {
                let p = self.to_primitive(v, false)?;
                self.to_number(&p)?
            }
        })
    }

    pub(crate) fn to_key(&mut self, v: &Value) -> R<Key> {
        if let Value::Num(n) = v {
            if *n >= 0.0 && n.fract() == 0.0 && *n < u32::MAX as f64 {
                return Ok(Key::Index(*n as u32));
            }
        }
        let s = self.to_string(v)?;
        Ok(Key::from_rc(s))
    }

    /// Relative index argument (`slice`, `at`, ...) clamped into `0..=len`.
    pub(crate) fn rel_index(&mut self, v: Option<&Value>, len: usize, default: usize) -> R<usize> {
        let Some(v) = v else { return Ok(default) };
        if matches!(v, Value::Undefined) {
            return Ok(default);
        }
        let n = self.to_number(v)?;
        let n = if n.is_nan() { 0.0 } else { n.trunc() };
        let len_f = len as f64;
        Ok(if n < 0.0 {
            (len_f + n).max(0.0) as usize
        } else {
            n.min(len_f) as usize
        })
    }

    // ---- properties -----------------------------------------------------

    pub(crate) fn get(&mut self, base: &Value, key: &Key) -> R<Value> {
        match base {
            Value::Undefined | Value::Null => {
                let what = if matches!(base, Value::Null) { "null" } else { "undefined" };
                self.type_error(format!("Cannot read property '{key}' of {what}"))
            }
            Value::Str(s) => match key {
                Key::Index(i) => Ok(s
                    .chars()
                    .nth(*i as usize)
                    .map(|c| Value::str(c.encode_utf8(&mut [0; 4])))
                    .unwrap_or(Value::Undefined)),
                Key::Name(n) if &**n == "length" => Ok(Value::Num(s.chars().count() as f64)),
                _ => {
                    let p = self.protos.string;
                    self.get_obj(p, key)
                }
            },
            Value::Num(_) => {
                let p = self.protos.number;
                self.get_obj(p, key)
            }
            Value::Bool(_) => {
                let p = self.protos.boolean;
                self.get_obj(p, key)
            }
            Value::Obj(id) => self.get_obj(*id, key),
        }
    }

    pub(crate) fn get_named(&mut self, base: &Value, name: &str) -> R<Value> {
        self.get(base, &Key::from_str(name))
    }

    fn get_obj(&mut self, id: ObjId, key: &Key) -> R<Value> {
        let mut cur = Some(id);
        while let Some(o) = cur {
            if let Some(v) = self.get_own(o, key)? {
                return Ok(v);
            }
            cur = self.obj(o).proto;
        }
        Ok(Value::Undefined)
    }

    pub(crate) fn get_own(&mut self, id: ObjId, key: &Key) -> R<Option<Value>> {
        match &self.obj(id).kind {
            ObjKind::Array { items, .. } => match key {
                Key::Index(i) => return Ok(Some(items.get(*i as usize).cloned().unwrap_or(Value::Undefined))),
                Key::Name(n) if &**n == "length" => return Ok(Some(Value::Num(items.len() as f64))),
                _ => {}
            },
            ObjKind::HostNs(path) => {
                let p = format!("{path}.{key}");
                let hv = self.host.get(&p).map_err(|e| self.host_err(e))?;
                if hv != HostValue::Undefined {
                    return Ok(Some(self.from_host(hv)?));
                }
            }
            ObjKind::Map(m) if key.is("size") => return Ok(Some(Value::Num(m.len() as f64))),
            ObjKind::Set(s) if key.is("size") => return Ok(Some(Value::Num(s.len() as f64))),
            ObjKind::Function(f) => {
                if let Some(v) = self.own_prop(id, key) {
                    return Ok(Some(v));
                }
                match key {
                    Key::Name(n) if &**n == "name" => {
                        let name = match f {
                            Func::Closure { def, .. } => def.name.clone().unwrap_or_default(),
                            Func::Native { name, .. } => name.to_string(),
                            Func::Host { path, .. } => {
                                path.rsplit('.').next().unwrap_or_default().to_string()
                            }
                            _ => String::new(),
                        };
                        return Ok(Some(Value::str(&name)));
                    }
                    Key::Name(n) if &**n == "length" => {
                        let len = match f {
                            Func::Closure { def, .. } => def
                                .params
                                .iter()
                                .take_while(|p| p.default.is_none() && !p.rest)
                                .count(),
                            _ => 0,
                        };
                        return Ok(Some(Value::Num(len as f64)));
                    }
                    Key::Name(n) if &**n == "prototype" => {
                        if let Func::Closure { def, .. } = f {
                            if !def.is_arrow && !def.is_async {
                                let proto = self.new_object()?;
                                self.obj_mut(proto)
                                    .props
                                    .insert(Rc::from("constructor"), Value::Obj(id));
                                self.obj_mut(id)
                                    .props
                                    .insert(Rc::from("prototype"), Value::Obj(proto));
                                return Ok(Some(Value::Obj(proto)));
                            }
                        }
                    }
                    _ => {}
                }
                return Ok(None);
            }
            _ => {}
        }
        Ok(self.own_prop(id, key))
    }

    fn own_prop(&self, id: ObjId, key: &Key) -> Option<Value> {
        let props = &self.obj(id).props;
        match key {
            Key::Name(n) => props.get(&**n).cloned(),
            Key::Index(i) => props.get(i.to_string().as_str()).cloned(),
        }
    }

    pub(crate) fn put(&mut self, base: &Value, key: Key, v: Value) -> R<()> {
        match base {
            Value::Undefined | Value::Null => {
                let what = if matches!(base, Value::Null) { "null" } else { "undefined" };
                self.type_error(format!("Cannot set property '{key}' of {what}"))
            }
            Value::Obj(id) => self.put_obj(*id, key, v),
            other => {
                let t = self.type_of(other);
                let s = self.to_string(other)?;
                self.type_error(format!("Cannot create property '{key}' on {t} '{s}'"))
            }
        }
    }

    pub(crate) fn put_obj(&mut self, id: ObjId, key: Key, v: Value) -> R<()> {
        let existing = match (&self.obj(id).kind, &key) {
            (ObjKind::Array { items, .. }, Key::Index(i)) => (*i as usize) < items.len(),
            (ObjKind::Array { .. }, Key::Name(n)) if &**n == "length" => true,
            _ => self.obj(id).props.contains_key(&*key.name()),
        };
        if self.obj(id).frozen && existing {
            return self.type_error(format!(
                "Cannot assign to read only property '{key}' of object"
            ));
        }
        let max_len = self.limits.max_array_len;
        match &mut self.obj_mut(id).kind {
            ObjKind::Array { items, bound } => match &key {
                Key::Index(i) => {
                    let i = *i as usize;
                    if i >= max_len {
                        return self.range_error("Invalid array length");
                    }
                    if i >= items.len() {
                        items.resize(i + 1, Value::Undefined);
                    }
                    items[i] = v;
                    if bound.is_some() {
                        self.sync_bound(id)?;
                    }
                    return Ok(());
                }
                Key::Name(n) if &**n == "length" => {
                    let n = self.to_number(&v)?;
                    if n < 0.0 || n.fract() != 0.0 || n as usize > max_len {
                        return self.range_error("Invalid array length");
                    }
                    if let ObjKind::Array { items, .. } = &mut self.obj_mut(id).kind {
                        items.resize(n as usize, Value::Undefined);
                    }
                    return self.sync_bound(id);
                }
                _ => {}
            },
            ObjKind::HostNs(path) => {
                let p = format!("{path}.{key}");
                let j = self.to_json(&v)?;
                return self.host.set(&p, j).map_err(|e| self.host_err(e));
            }
            _ => {}
        }
        let name = key.name();
        let o = self.obj_mut(id);
        if !o.extensible && !o.props.contains_key(&name) {
            return self.type_error(format!(
                "Cannot add property {key}, object is not extensible"
            ));
        }
        o.props.insert(name, v);
        Ok(())
    }

    fn delete(&mut self, base: &Value, key: Key) -> R<bool> {
        let Value::Obj(id) = base else {
            if base.is_nullish() {
                return self.type_error("Cannot convert undefined or null to object".to_string());
            }
            return Ok(true);
        };
        let id = *id;
        if self.obj(id).frozen {
            return self.type_error(format!("Cannot delete property '{key}' of object"));
        }
        match &mut self.obj_mut(id).kind {
            ObjKind::Array { items, .. } => {
                if let Key::Index(i) = key {
                    if let Some(slot) = items.get_mut(i as usize) {
                        *slot = Value::Undefined;
                    }
                    self.sync_bound(id)?;
                    return Ok(true);
                }
            }
            ObjKind::HostNs(path) => {
                let p = format!("{path}.{key}");
                return self.type_error(format!("Cannot delete property '{p}'"));
            }
            _ => {}
        }
        let name = key.name();
        self.obj_mut(id).props.shift_remove(&name);
        Ok(true)
    }

    pub(crate) fn has_property(&mut self, id: ObjId, key: &Key) -> R<bool> {
        let mut cur = Some(id);
        while let Some(o) = cur {
            match &self.obj(o).kind {
                ObjKind::Array { items, .. } => match key {
                    Key::Index(i) if (*i as usize) < items.len() => return Ok(true),
                    Key::Name(n) if &**n == "length" => return Ok(true),
                    _ => {}
                },
                ObjKind::HostNs(path) => {
                    let path = path.clone();
                    let keys = self.host.keys(&path).map_err(|e| self.host_err(e))?;
                    if keys.iter().any(|k| *k == key.to_string()) {
                        return Ok(true);
                    }
                }
                _ => {}
            }
            if self.own_prop(o, key).is_some() {
                return Ok(true);
            }
            cur = self.obj(o).proto;
        }
        Ok(false)
    }

    /// Own enumerable string keys in JavaScript order.
    pub(crate) fn own_keys(&mut self, v: &Value) -> R<Vec<Rc<str>>> {
        match v {
            Value::Str(s) => Ok((0..s.chars().count()).map(|i| Rc::from(i.to_string())).collect()),
            Value::Obj(id) => {
                let id = *id;
                let mut out: Vec<Rc<str>> = Vec::new();
                match &self.obj(id).kind {
                    ObjKind::Array { items, .. } => {
                        out.extend((0..items.len()).map(|i| Rc::from(i.to_string())));
                    }
                    ObjKind::HostNs(path) => {
                        let path = path.clone();
                        let keys = self.host.keys(&path).map_err(|e| self.host_err(e))?;
                        out.extend(keys.iter().map(|k| Rc::from(k.as_str())));
                    }
                    _ => {}
                }
                let props = &self.obj(id).props;
                let mut ints: Vec<(u32, Rc<str>)> = Vec::new();
                let mut names = Vec::new();
                for k in props.keys() {
                    match canonical_index(k) {
                        Some(i) => ints.push((i, k.clone())),
                        None => names.push(k.clone()),
                    }
                }
                ints.sort_by_key(|(i, _)| *i);
                out.extend(ints.into_iter().map(|(_, k)| k));
                out.extend(names);
                Ok(out)
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Materializes an iterable into a list.
    pub(crate) fn iterate(&mut self, v: &Value) -> R<Vec<Value>> {
        match v {
            Value::Str(s) => Ok(s.chars().map(|c| Value::str(c.encode_utf8(&mut [0; 4]))).collect()),
            Value::Obj(id) => match &self.obj(*id).kind {
                ObjKind::Array { items, .. } => Ok(items.clone()),
                ObjKind::Set(items) => Ok(items.clone()),
                ObjKind::Map(entries) => {
                    let entries = entries.clone();
                    let mut out = Vec::with_capacity(entries.len());
                    for (k, v) in entries {
                        out.push(self.new_array(vec![k, v])?);
                    }
                    Ok(out)
                }
                _ => self.type_error("object is not iterable"),
            },
            other => {
                let s = crate::inspect::inspect(self, other, false)?;
                self.type_error(format!("{s} is not iterable"))
            }
        }
    }

    // ---- calls ----------------------------------------------------------

    fn callee(&self, f: &Value) -> Option<Callee> {
        let Value::Obj(id) = f else { return None };
        match &self.obj(*id).kind {
            ObjKind::Function(func) => Some(match func {
                Func::Closure { def, env } => Callee::Closure(def.clone(), *env),
                Func::Native { call, construct, .. } => Callee::Native(*call, *construct),
                Func::Bound { target, this, args } => Callee::Bound(*target, this.clone(), args.clone()),
                Func::Host { path, bound } => Callee::Host(path.clone(), bound.clone()),
                Func::Resolver {
                    promise,
                    reject,
                    done,
                } => Callee::Resolver(*promise, *reject, done.clone()),
                Func::Combinator {
                    index,
                    state,
                    settled_kind,
                } => Callee::Combinator(*index, state.clone(), *settled_kind),
            }),
            _ => None,
        }
    }

    fn enter_call(&mut self) -> R<()> {
        self.depth += 1;
        if self.depth > self.limits.max_call_depth {
            self.depth -= 1;
            return abort(Abort::StackDepth {
                limit: self.limits.max_call_depth,
            });
        }
        Ok(())
    }

    pub(crate) fn call(&mut self, f: &Value, this: Value, args: Vec<Value>) -> R<Value> {
        let Some(c) = self.callee(f) else {
            let s = crate::inspect::inspect(self, f, false)?;
            return self.type_error(format!("{s} is not a function"));
        };
        match c {
            Callee::Closure(def, env) => self.call_closure(&def, env, this, args),
            Callee::Native(call, _) => {
                self.enter_call()?;
                let r = call(self, &this, &args);
                self.depth -= 1;
                r
            }
            Callee::Bound(target, bthis, mut bargs) => {
                bargs.extend(args);
                self.call(&Value::Obj(target), bthis, bargs)
            }
            Callee::Host(path, bound) => {
                let mut jargs = bound;
                for a in &args {
                    jargs.push(self.to_json(a)?);
                }
                let hv = self.host.call(&path, jargs).map_err(|e| self.host_err(e))?;
                self.from_host(hv)
            }
            Callee::Resolver(p, reject, done) => {
                if done.get() {
                    return Ok(Value::Undefined);
                }
                done.set(true);
                let arg = args.into_iter().next().unwrap_or(Value::Undefined);
                if reject {
                    self.reject_promise(p, arg)?;
                } else {
                    self.resolve_promise(p, arg)?;
                }
                Ok(Value::Undefined)
            }
            Callee::Combinator(index, state, settled_kind) => {
                let arg = args.into_iter().next().unwrap_or(Value::Undefined);
                crate::builtins::combinator_step(self, index, &state, settled_kind, arg)?;
                Ok(Value::Undefined)
            }
        }
    }

    fn call_closure(&mut self, def: &Rc<Function>, env: ScopeId, this: Value, args: Vec<Value>) -> R<Value> {
        self.enter_call()?;
        let saved = self.scope;
        let this_val = if def.is_arrow { None } else { Some(this) };
        let fscope = self.new_scope(Some(env), true, this_val);
        self.scope = fscope;
        let r = self.run_function_body(def, args);
        self.scope = saved;
        self.release_scope(fscope);
        self.depth -= 1;
        if def.is_async {
            let p = self.new_promise()?;
            match r {
                Ok(v) => self.resolve_promise(p, v)?,
                Err(Ctrl::Throw(e)) => self.reject_promise(p, e)?,
                Err(abort) => return Err(abort),
            }
            return Ok(Value::Obj(p));
        }
        r
    }

    fn run_function_body(&mut self, def: &Rc<Function>, args: Vec<Value>) -> R<Value> {
        let mut args = args.into_iter();
        for p in &def.params {
            let v = if p.rest {
                let rest: Vec<Value> = args.by_ref().collect();
                self.new_array(rest)?
            } else {
                let v = args.next().unwrap_or(Value::Undefined);
                match (&v, &p.default) {
                    (Value::Undefined, Some(d)) => self.eval(d)?,
                    _ => v,
                }
            };
            self.bind_pattern(&p.pattern, v, Bind::Init { mutable: true })?;
        }
        let key = Rc::as_ptr(def);
        let vars = match self.var_cache.get(&key) {
            Some(v) => v.clone(),
            None => {
                let mut names = Vec::new();
                if let FuncBody::Block(b) = &def.body {
                    collect_vars(b, &mut names);
                }
                let names = Rc::new(names);
                self.var_cache.insert(key, names.clone());
                names
            }
        };
        let scope = self.scope;
        for n in vars.iter() {
            if !self.scopes[scope.0 as usize].vars.iter().any(|(x, _)| x == n) {
                self.declare(scope, n, Value::Undefined, true, true, false)?;
            }
        }
        match &def.body {
            FuncBody::Expr(e) => self.eval(e),
            FuncBody::Block(stmts) => {
                self.hoist_lexical(stmts)?;
                match self.exec_stmts(stmts)? {
                    Flow::Return(v) => Ok(v),
                    _ => Ok(Value::Undefined),
                }
            }
        }
    }

    pub(crate) fn construct(&mut self, f: &Value, args: Vec<Value>) -> R<Value> {
        match self.callee(f) {
            Some(Callee::Native(_, Some(ctor))) => {
                self.enter_call()?;
                let r = ctor(self, &Value::Undefined, &args);
                self.depth -= 1;
                r
            }
            Some(Callee::Closure(def, env)) if !def.is_arrow && !def.is_async => {
                let proto = self.get_named(f, "prototype")?;
                let proto = proto.as_obj().unwrap_or(self.protos.object);
                let obj = self.alloc(Object::new(Some(proto), ObjKind::Ordinary))?;
                let r = self.call_closure(&def, env, Value::Obj(obj), args)?;
                Ok(if matches!(r, Value::Obj(_)) { r } else { Value::Obj(obj) })
            }
            Some(Callee::Bound(target, _, mut bargs)) => {
                bargs.extend(args);
                self.construct(&Value::Obj(target), bargs)
            }
            _ => {
                let s = crate::inspect::inspect(self, f, false)?;
                self.type_error(format!("{s} is not a constructor"))
            }
        }
    }

    fn make_closure(&mut self, def: &Rc<Function>) -> R<Value> {
        let env = self.scope;
        self.mark_captured(env);
        let id = self.new_function(Func::Closure {
            def: def.clone(),
            env,
        })?;
        Ok(Value::Obj(id))
    }

    // ---- promises -------------------------------------------------------

    pub(crate) fn new_promise(&mut self) -> R<ObjId> {
        let proto = self.protos.promise;
        self.alloc(Object::new(
            Some(proto),
            ObjKind::Promise(Promise {
                state: PState::Pending,
                reactions: Vec::new(),
                handled: false,
            }),
        ))
    }

    pub(crate) fn promise_state(&self, id: ObjId) -> Option<PState> {
        match &self.obj(id).kind {
            ObjKind::Promise(p) => Some(p.state.clone()),
            _ => None,
        }
    }

    pub(crate) fn is_promise(&self, v: &Value) -> Option<ObjId> {
        match v {
            Value::Obj(id) if matches!(self.obj(*id).kind, ObjKind::Promise(_)) => Some(*id),
            _ => None,
        }
    }

    pub(crate) fn resolve_promise(&mut self, p: ObjId, v: Value) -> R<()> {
        if let Value::Obj(vid) = &v {
            if *vid == p {
                let e = {
                    let tp = self.protos.type_error;
                    self.make_error(tp, "Chaining cycle detected for promise")?
                };
                return self.reject_promise(p, e);
            }
            if matches!(self.obj(*vid).kind, ObjKind::Promise(_)) {
                self.then(*vid, Value::Undefined, Value::Undefined, Some(p));
                return Ok(());
            }
            if matches!(self.obj(*vid).kind, ObjKind::Ordinary) {
                let then = self.get_named(&v, "then")?;
                if self.is_callable(&then) {
                    self.jobs.push_back(Job::Thenable {
                        then,
                        thenable: v,
                        promise: p,
                    });
                    return Ok(());
                }
            }
        }
        self.settle(p, PState::Fulfilled(v));
        Ok(())
    }

    pub(crate) fn reject_promise(&mut self, p: ObjId, e: Value) -> R<()> {
        self.settle(p, PState::Rejected(e));
        Ok(())
    }

    fn settle(&mut self, p: ObjId, state: PState) {
        let ObjKind::Promise(pr) = &mut self.obj_mut(p).kind else {
            return;
        };
        if !matches!(pr.state, PState::Pending) {
            return;
        }
        pr.state = state.clone();
        let reactions = std::mem::take(&mut pr.reactions);
        let unhandled = !pr.handled;
        if let PState::Rejected(_) = state {
            if unhandled {
                self.rejected.push(p);
            }
        }
        for r in reactions {
            self.enqueue_reaction(r, &state);
        }
    }

    fn enqueue_reaction(&mut self, r: Reaction, state: &PState) {
        let (handler, arg, rejected) = match state {
            PState::Fulfilled(v) => (r.on_fulfilled, v.clone(), false),
            PState::Rejected(e) => (r.on_rejected, e.clone(), true),
            PState::Pending => return,
        };
        self.jobs.push_back(Job::React {
            handler,
            arg,
            derived: r.derived,
            rejected,
        });
    }

    /// Registers reactions on `p`; results flow into `derived`.
    pub(crate) fn then(&mut self, p: ObjId, on_fulfilled: Value, on_rejected: Value, derived: Option<ObjId>) {
        let reaction = Reaction {
            on_fulfilled,
            on_rejected,
            derived,
        };
        let ObjKind::Promise(pr) = &mut self.obj_mut(p).kind else {
            return;
        };
        pr.handled = true;
        match pr.state.clone() {
            PState::Pending => pr.reactions.push(reaction),
            state => self.enqueue_reaction(reaction, &state),
        }
    }

    pub(crate) fn run_jobs(&mut self) -> R<()> {
        while let Some(job) = self.jobs.pop_front() {
            self.tick()?;
            self.run_job(job)?;
        }
        Ok(())
    }

    fn run_job(&mut self, job: Job) -> R<()> {
        match job {
            Job::React {
                handler,
                arg,
                derived,
                rejected,
            } => {
                if self.is_callable(&handler) {
                    match self.call(&handler, Value::Undefined, vec![arg]) {
                        Ok(v) => {
                            if let Some(d) = derived {
                                self.resolve_promise(d, v)?;
                            }
                        }
                        Err(Ctrl::Throw(e)) => {
                            if let Some(d) = derived {
                                self.reject_promise(d, e)?;
                            }
                        }
                        Err(a) => return Err(a),
                    }
                } else if let Some(d) = derived {
                    if rejected {
                        self.reject_promise(d, arg)?;
                    } else {
                        self.resolve_promise(d, arg)?;
                    }
                }
            }
            Job::Thenable {
                then,
                thenable,
                promise,
            } => {
                let done = Rc::new(Cell::new(false));
                let res = self.new_function(Func::Resolver {
                    promise,
                    reject: false,
                    done: done.clone(),
                })?;
                let rej = self.new_function(Func::Resolver {
                    promise,
                    reject: true,
                    done: done.clone(),
                })?;
                match self.call(&then, thenable, vec![Value::Obj(res), Value::Obj(rej)]) {
                    Ok(_) => {}
                    Err(Ctrl::Throw(e)) => {
                        if !done.get() {
                            done.set(true);
                            self.reject_promise(promise, e)?;
                        }
                    }
                    Err(a) => return Err(a),
                }
            }
        }
        Ok(())
    }

    fn await_value(&mut self, v: Value) -> R<Value> {
        let p = match self.is_promise(&v) {
            Some(p) => p,
            None => {
                let thenable = matches!(&v, Value::Obj(id) if matches!(self.obj(*id).kind, ObjKind::Ordinary))
                    && {
                        let t = self.get_named(&v, "then")?;
                        self.is_callable(&t)
                    };
                if !thenable {
                    return Ok(v);
                }
                let p = self.new_promise()?;
                self.resolve_promise(p, v)?;
                p
            }
        };
        if let ObjKind::Promise(pr) = &mut self.obj_mut(p).kind {
            pr.handled = true;
        }
        loop {
            match self.promise_state(p) {
                Some(PState::Fulfilled(x)) => return Ok(x),
                Some(PState::Rejected(e)) => return Err(Ctrl::Throw(e)),
                _ => match self.jobs.pop_front() {
                    Some(job) => {
                        self.tick()?;
                        self.run_job(job)?;
                    }
                    None => return self.plain_error("await on a promise that never settles"),
                },
            }
        }
    }

    fn take_unhandled(&mut self) -> Option<Value> {
        let rejected = std::mem::take(&mut self.rejected);
        for p in rejected {
            if let ObjKind::Promise(pr) = &self.obj(p).kind {
                if !pr.handled {
                    if let PState::Rejected(e) = &pr.state {
                        return Some(e.clone());
                    }
                }
            }
        }
        None
    }

    // ---- program --------------------------------------------------------

    pub(crate) fn run_program(&mut self, prog: &Program) -> R<Value> {
        self.deadline = self.limits.wall_timeout.map(|d| Instant::now() + d);
        let mut names = Vec::new();
        collect_vars(&prog.body, &mut names);
        let scope = self.scope;
        for n in &names {
            self.declare(scope, n, Value::Undefined, true, true, false)?;
        }
        self.hoist_lexical(&prog.body)?;
        self.completion = Value::Undefined;
        for s in &prog.body {
            if let Flow::Return(v) = self.exec(s)? {
                self.completion = v;
                break;
            }
        }
        let completion = std::mem::replace(&mut self.completion, Value::Undefined);
        self.run_jobs()?;
        if let Some(e) = self.take_unhandled() {
            return Err(Ctrl::Throw(e));
        }
        Ok(completion)
    }

    // ---- statements -----------------------------------------------------

    fn hoist_lexical(&mut self, body: &[Stmt]) -> R<()> {
        let scope = self.scope;
        for s in body {
            match &s.kind {
                StmtKind::Decl(d) if d.kind != DeclKind::Var => {
                    let mut names = Vec::new();
                    for (p, _) in &d.decls {
                        pattern_names(p, &mut names);
                    }
                    for n in names {
                        self.declare(scope, &n, Value::Undefined, d.kind == DeclKind::Let, false, true)?;
                    }
                }
                StmtKind::Function(f) => {
                    let v = self.make_closure(f)?;
                    let name = f.name.clone().unwrap_or_default();
                    self.declare(scope, &name, v, true, true, false)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn exec_stmts(&mut self, body: &[Stmt]) -> R<Flow> {
        for s in body {
            match self.exec(s)? {
                Flow::Normal => {}
                f => return Ok(f),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_block(&mut self, body: &[Stmt]) -> R<Flow> {
        if !body.iter().any(is_lexical_decl) {
            return self.exec_stmts(body);
        }
        let saved = self.scope;
        let s = self.new_scope(Some(saved), false, None);
        self.scope = s;
        let r = match self.hoist_lexical(body) {
            Ok(()) => self.exec_stmts(body),
            Err(e) => Err(e),
        };
        self.scope = saved;
        self.release_scope(s);
        r
    }

    fn exec(&mut self, s: &Stmt) -> R<Flow> {
        self.tick()?;
        self.cur_pos = s.pos;
        match &s.kind {
            StmtKind::Expr(e) => {
                let v = self.eval(e)?;
                if self.depth == 0 {
                    self.completion = v;
                }
                Ok(Flow::Normal)
            }
            StmtKind::Decl(d) => {
                self.exec_decl(d)?;
                Ok(Flow::Normal)
            }
            StmtKind::Function(_) | StmtKind::Empty => Ok(Flow::Normal),
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e)?,
                    None => Value::Undefined,
                };
                Ok(Flow::Return(v))
            }
            StmtKind::If(test, cons, alt) => {
                let t = self.eval(test)?;
                if self.truthy(&t) {
                    self.exec_sub(cons)
                } else if let Some(a) = alt {
                    self.exec_sub(a)
                } else {
                    Ok(Flow::Normal)
                }
            }
            StmtKind::Block(b) => self.exec_block(b),
            StmtKind::Break(l) => Ok(Flow::Break(l.clone())),
            StmtKind::Continue(l) => Ok(Flow::Continue(l.clone())),
            StmtKind::Throw(e) => {
                let v = self.eval(e)?;
                self.throw_pos = Some(s.pos);
                Err(Ctrl::Throw(v))
            }
            StmtKind::Try {
                block,
                handler,
                finalizer,
            } => self.exec_try(block, handler, finalizer),
            StmtKind::Switch(d, cases) => self.exec_switch(d, cases),
            StmtKind::Labeled(label, body) => {
                let f = self.exec_loop(body, Some(label))?;
                match f {
                    Flow::Break(Some(l)) if &l == label => Ok(Flow::Normal),
                    f => Ok(f),
                }
            }
            _ => self.exec_loop(s, None),
        }
    }

    /// Statement in a position that may declare (if/loop bodies).
    fn exec_sub(&mut self, s: &Stmt) -> R<Flow> {
        if is_lexical_decl(s) {
            self.exec_block(std::slice::from_ref(s))
        } else {
            self.exec(s)
        }
    }

    fn exec_loop(&mut self, s: &Stmt, label: Option<&str>) -> R<Flow> {
        match &s.kind {
            StmtKind::For {
                init,
                test,
                update,
                body,
            } => self.exec_for(init.as_ref(), test.as_ref(), update.as_ref(), body, label),
            StmtKind::ForOf(head, obj, body) => self.exec_for_each(head, obj, body, label, true),
            StmtKind::ForIn(head, obj, body) => self.exec_for_each(head, obj, body, label, false),
            StmtKind::While(test, body) => loop {
                let t = self.eval(test)?;
                if !self.truthy(&t) {
                    return Ok(Flow::Normal);
                }
                let f = self.exec_sub(body)?;
                if let Some(out) = loop_exit(f, label) {
                    return Ok(out);
                }
            },
            StmtKind::DoWhile(body, test) => loop {
                let f = self.exec_sub(body)?;
                if let Some(out) = loop_exit(f, label) {
                    return Ok(out);
                }
                let t = self.eval(test)?;
                if !self.truthy(&t) {
                    return Ok(Flow::Normal);
                }
            },
            _ => {
                if label.is_some() {
                    self.exec(s)
                } else {
                    Ok(Flow::Normal)
                }
            }
        }
    }

    fn copy_scope(&mut self, from: ScopeId) -> ScopeId {
        let parent = self.scopes[from.0 as usize].parent;
        let vars: Vec<(Rc<str>, Binding)> = self.scopes[from.0 as usize]
            .vars
            .iter()
            .map(|(n, b)| {
                (
                    n.clone(),
                    Binding {
                        value: b.value.clone(),
                        mutable: b.mutable,
                        init: b.init,
                        lexical: b.lexical,
                    },
                )
            })
            .collect();
        let id = self.new_scope(parent, false, None);
        self.scopes[id.0 as usize].vars = vars;
        self.release_scope(from);
        id
    }

    fn exec_for(
        &mut self,
        init: Option<&ForInit>,
        test: Option<&Expr>,
        update: Option<&Expr>,
        body: &Stmt,
        label: Option<&str>,
    ) -> R<Flow> {
        let saved = self.scope;
        let per_iter = matches!(init, Some(ForInit::Decl(d)) if d.kind != DeclKind::Var);
        if per_iter {
            self.scope = self.new_scope(Some(saved), false, None);
        }
        let r = self.exec_for_inner(init, test, update, body, label, per_iter);
        if per_iter {
            let cur = self.scope;
            self.release_scope(cur);
        }
        self.scope = saved;
        r
    }

    fn exec_for_inner(
        &mut self,
        init: Option<&ForInit>,
        test: Option<&Expr>,
        update: Option<&Expr>,
        body: &Stmt,
        label: Option<&str>,
        per_iter: bool,
    ) -> R<Flow> {
        match init {
            Some(ForInit::Decl(d)) => self.exec_decl(d)?,
            Some(ForInit::Expr(e)) => {
                self.eval(e)?;
            }
            None => {}
        }
        if per_iter {
            self.scope = self.copy_scope(self.scope);
        }
        loop {
            if let Some(t) = test {
                let v = self.eval(t)?;
                if !self.truthy(&v) {
                    return Ok(Flow::Normal);
                }
            } else {
                self.tick()?;
            }
            let f = self.exec_sub(body)?;
            if let Some(out) = loop_exit(f, label) {
                return Ok(out);
            }
            if per_iter {
                self.scope = self.copy_scope(self.scope);
            }
            if let Some(u) = update {
                self.eval(u)?;
            }
        }
    }

    fn exec_for_each(
        &mut self,
        head: &ForHead,
        obj: &Expr,
        body: &Stmt,
        label: Option<&str>,
        is_of: bool,
    ) -> R<Flow> {
        let v = self.eval(obj)?;
        // Arrays are walked live so pushes during iteration are visited.
        let live = if is_of {
            match &v {
                Value::Obj(id) if matches!(self.obj(*id).kind, ObjKind::Array { .. }) => Some(*id),
                _ => None,
            }
        } else {
            None
        };
        let items: Vec<Value> = if live.is_some() {
            Vec::new()
        } else if is_of {
            self.iterate(&v)?
        } else if v.is_nullish() {
            Vec::new()
        } else {
            let mut keys = self.own_keys(&v)?;
            if let Value::Obj(id) = &v {
                // Inherited user-defined enumerable properties.
                let mut p = self.obj(*id).proto;
                while let Some(pid) = p {
                    if pid == self.protos.object || pid == self.protos.array || pid == self.protos.function {
                        break;
                    }
                    for k in self.obj(pid).props.keys() {
                        if !keys.contains(k) {
                            keys.push(k.clone());
                        }
                    }
                    p = self.obj(pid).proto;
                }
            }
            keys.into_iter().map(Value::Str).collect()
        };
        let mut i = 0usize;
        loop {
            let item = match live {
                Some(id) => match &self.obj(id).kind {
                    ObjKind::Array { items, .. } if i < items.len() => items[i].clone(),
                    _ => return Ok(Flow::Normal),
                },
                None => match items.get(i) {
                    Some(x) => x.clone(),
                    None => return Ok(Flow::Normal),
                },
            };
            i += 1;
            self.tick()?;
            let saved = self.scope;
            let f = match head {
                ForHead::Decl(kind, pat) if *kind != DeclKind::Var => {
                    let s = self.new_scope(Some(saved), false, None);
                    self.scope = s;
                    let r = match self.bind_pattern(pat, item, Bind::Init { mutable: *kind == DeclKind::Let }) {
                        Ok(()) => self.exec_sub(body),
                        Err(e) => Err(e),
                    };
                    self.scope = saved;
                    self.release_scope(s);
                    r?
                }
                ForHead::Decl(_, pat) => {
                    self.bind_pattern(pat, item, Bind::Var)?;
                    self.exec_sub(body)?
                }
                ForHead::Target(pat) => {
                    self.bind_pattern(pat, item, Bind::Assign)?;
                    self.exec_sub(body)?
                }
            };
            if let Some(out) = loop_exit(f, label) {
                return Ok(out);
            }
        }
    }

    fn exec_try(
        &mut self,
        block: &[Stmt],
        handler: &Option<(Option<Pattern>, Vec<Stmt>)>,
        finalizer: &Option<Vec<Stmt>>,
    ) -> R<Flow> {
        let mut r = self.exec_block(block);
        if let (Err(Ctrl::Throw(e)), Some((param, body))) = (&r, handler) {
            let e = e.clone();
            let saved = self.scope;
            let s = self.new_scope(Some(saved), false, None);
            self.scope = s;
            r = match param {
                Some(p) => match self.bind_pattern(p, e, Bind::Init { mutable: true }) {
                    Ok(()) => self.exec_block(body),
                    Err(x) => Err(x),
                },
                None => self.exec_block(body),
            };
            self.scope = saved;
            self.release_scope(s);
        }
        if let Some(fin) = finalizer {
            if let Err(Ctrl::Abort(_)) = r {
                return r;
            }
            match self.exec_block(fin)? {
                Flow::Normal => {}
                f => return Ok(f),
            }
        }
        r
    }

    fn exec_switch(&mut self, disc: &Expr, cases: &[SwitchCase]) -> R<Flow> {
        let d = self.eval(disc)?;
        let saved = self.scope;
        let s = self.new_scope(Some(saved), false, None);
        self.scope = s;
        let r = self.exec_switch_inner(&d, cases);
        self.scope = saved;
        self.release_scope(s);
        r
    }

    fn exec_switch_inner(&mut self, d: &Value, cases: &[SwitchCase]) -> R<Flow> {
        for c in cases {
            self.hoist_lexical(&c.body)?;
        }
        let mut start = None;
        for (i, c) in cases.iter().enumerate() {
            if let Some(t) = &c.test {
                let v = self.eval(t)?;
                if v.strict_eq(d) {
                    start = Some(i);
                    break;
                }
            }
        }
        let start = start.or_else(|| cases.iter().position(|c| c.test.is_none()));
        let Some(start) = start else {
            return Ok(Flow::Normal);
        };
        for c in &cases[start..] {
            match self.exec_stmts(&c.body)? {
                Flow::Normal => {}
                Flow::Break(None) => return Ok(Flow::Normal),
                f => return Ok(f),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_decl(&mut self, d: &VarDecl) -> R<()> {
        for (pat, init) in &d.decls {
            let mode = match d.kind {
                DeclKind::Var => Bind::Var,
                DeclKind::Let => Bind::Init { mutable: true },
                DeclKind::Const => Bind::Init { mutable: false },
            };
            let v = match init {
                Some(e) => {
                    let v = self.eval(e)?;
                    if let (Pattern::Ident(name, _), ExprKind::Function(f)) = (pat, &e.kind) {
                        if f.name.is_none() {
                            self.name_function(&v, name);
                        }
                    }
                    v
                }
                None if d.kind == DeclKind::Var => continue,
                None => Value::Undefined,
            };
            self.bind_pattern(pat, v, mode)?;
        }
        Ok(())
    }

    fn name_function(&mut self, v: &Value, name: &str) {
        if let Value::Obj(id) = v {
            self.obj_mut(*id).props.insert(Rc::from("name"), Value::str(name));
        }
    }

    fn bind_ident(&mut self, name: &str, v: Value, mode: Bind) -> R<()> {
        match mode {
            Bind::Assign => self.assign_ident(name, v),
            Bind::Var => {
                let scope = self.func_scope();
                let s = &mut self.scopes[scope.0 as usize];
                if let Some((_, b)) = s.vars.iter_mut().find(|(n, _)| &**n == name) {
                    b.value = v;
                    Ok(())
                } else {
                    self.declare(scope, name, v, true, true, false)
                }
            }
            Bind::Init { mutable } => {
                let scope = self.scope;
                let s = &mut self.scopes[scope.0 as usize];
                if let Some((_, b)) = s.vars.iter_mut().find(|(n, _)| &**n == name) {
                    if !b.init || b.mutable {
                        b.value = v;
                        b.init = true;
                        b.mutable = mutable;
                        return Ok(());
                    }
                }
                self.declare(scope, name, v, mutable, true, true)
            }
        }
    }

    fn bind_pattern(&mut self, pat: &Pattern, v: Value, mode: Bind) -> R<()> {
        match pat {
            Pattern::Ident(name, _) => self.bind_ident(name, v, mode),
            Pattern::Expr(e) => {
                let (obj, key) = self.eval_ref(e)?;
                self.put(&obj, key, v)
            }
            Pattern::Object(props, rest) => {
                if v.is_nullish() {
                    let what = if matches!(v, Value::Null) { "null" } else { "undefined" };
                    return self.type_error(format!("Cannot destructure '{what}' as it is {what}."));
                }
                let mut used = Vec::new();
                for p in props {
                    let key = match &p.key {
                        PropKey::Name(n) => Key::from_rc(n.clone()),
                        PropKey::Computed(e) => {
                            let k = self.eval(e)?;
                            self.to_key(&k)?
                        }
                    };
                    used.push(key.name());
                    let mut x = self.get(&v, &key)?;
                    if let (Value::Undefined, Some(d)) = (&x, &p.value.default) {
                        x = self.eval(d)?;
                    }
                    self.bind_pattern(&p.value.pattern, x, mode)?;
                }
                if let Some(r) = rest {
                    let keys = self.own_keys(&v)?;
                    let out = self.new_object()?;
                    for k in keys {
                        if used.contains(&k) {
                            continue;
                        }
                        let x = self.get(&v, &Key::from_rc(k.clone()))?;
                        self.obj_mut(out).props.insert(k, x);
                    }
                    self.bind_pattern(r, Value::Obj(out), mode)?;
                }
                Ok(())
            }
            Pattern::Array(elems, rest) => {
                let items = self.iterate(&v)?;
                let mut it = items.into_iter();
                for el in elems {
                    let x = it.next().unwrap_or(Value::Undefined);
                    if let Some(el) = el {
                        let x = match (&x, &el.default) {
                            (Value::Undefined, Some(d)) => self.eval(d)?,
                            _ => x,
                        };
                        self.bind_pattern(&el.pattern, x, mode)?;
                    }
                }
                if let Some(r) = rest {
                    let remaining: Vec<Value> = it.collect();
                    let arr = self.new_array(remaining)?;
                    self.bind_pattern(r, arr, mode)?;
                }
                Ok(())
            }
        }
    }

    // ---- expressions ----------------------------------------------------

    /// Object and key of a member expression used as a write target.
    fn eval_ref(&mut self, e: &Expr) -> R<(Value, Key)> {
        match &e.kind {
            ExprKind::Member { object, prop, .. } => {
                let obj = self.eval(object)?;
                let key = self.member_key(prop)?;
                Ok((obj, key))
            }
            ExprKind::Paren(inner) => self.eval_ref(inner),
            _ => self.syntax_error("Invalid assignment target"),
        }
    }

    fn member_key(&mut self, prop: &MemberProp) -> R<Key> {
        match prop {
            MemberProp::Name(n) => Ok(Key::from_rc(n.clone())),
            MemberProp::Computed(e) => {
                let k = self.eval(e)?;
                self.to_key(&k)
            }
        }
    }

    pub(crate) fn eval(&mut self, e: &Expr) -> R<Value> {
        self.tick()?;
        self.cur_pos = e.pos;
        match &e.kind {
            ExprKind::Num(n) => Ok(Value::Num(*n)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Null => Ok(Value::Null),
            ExprKind::Template(chunks, exprs) => {
                let mut out = String::new();
                for (i, c) in chunks.iter().enumerate() {
                    out.push_str(c);
                    if let Some(x) = exprs.get(i) {
                        let v = self.eval(x)?;
                        let s = self.to_string(&v)?;
                        out.push_str(&s);
                        self.check_string_len(out.len())?;
                    }
                }
                Ok(Value::str(&out))
            }
            ExprKind::Ident(name) => self.read_ident(name),
            ExprKind::This => Ok(self.this_value()),
            ExprKind::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    match it {
                        ArrayItem::Hole => out.push(Value::Undefined),
                        ArrayItem::Item(x) => out.push(self.eval(x)?),
                        ArrayItem::Spread(x) => {
                            let v = self.eval(x)?;
                            let vs = self.iterate(&v)?;
                            self.charge(vs.len() as u64)?;
                            out.extend(vs);
                        }
                    }
                }
                self.new_array(out)
            }
            ExprKind::Object(props) => self.eval_object(props),
            ExprKind::Function(def) => self.make_closure(def),
            ExprKind::Unary(op, arg) => self.eval_unary(*op, arg),
            ExprKind::Update {
                increment,
                prefix,
                target,
            } => {
                let old = self.eval(target)?;
                let n = self.to_number(&old)?;
                let new = if *increment { n + 1.0 } else { n - 1.0 };
                self.write_target(target, Value::Num(new))?;
                Ok(Value::Num(if *prefix { new } else { n }))
            }
            ExprKind::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                self.cur_pos = e.pos;
                self.binop(*op, a, b)
            }
            ExprKind::Logical(op, l, r) => {
                let a = self.eval(l)?;
                let short = match op {
                    LogicalOp::And => !self.truthy(&a),
                    LogicalOp::Or => self.truthy(&a),
                    LogicalOp::Nullish => !a.is_nullish(),
                };
                if short {
                    Ok(a)
                } else {
                    self.eval(r)
                }
            }
            ExprKind::Assign { op, target, value } => self.eval_assign(*op, target, value),
            ExprKind::Cond(t, c, a) => {
                let v = self.eval(t)?;
                if self.truthy(&v) {
                    self.eval(c)
                } else {
                    self.eval(a)
                }
            }
            ExprKind::Call { .. } | ExprKind::Member { .. } => {
                Ok(self.eval_chain(e)?.unwrap_or(Value::Undefined))
            }
            ExprKind::New { callee, args } => {
                let f = self.eval(callee)?;
                let argv = self.eval_args(args)?;
                self.cur_pos = e.pos;
                if !self.is_callable(&f) {
                    let text = expr_text(callee);
                    return self.type_error(format!("{text} is not a constructor"));
                }
                self.construct(&f, argv)
            }
            ExprKind::Paren(inner) => self.eval(inner),
            ExprKind::Seq(items) => {
                let mut last = Value::Undefined;
                for x in items {
                    last = self.eval(x)?;
                }
                Ok(last)
            }
            ExprKind::Await(arg) => {
                let v = self.eval(arg)?;
                self.await_value(v)
            }
        }
    }

    fn eval_object(&mut self, props: &[ObjProp]) -> R<Value> {
        let id = self.new_object()?;
        for p in props {
            match p {
                ObjProp::KeyValue(key, value) => {
                    let k: Rc<str> = match key {
                        PropKey::Name(n) => n.clone(),
                        PropKey::Computed(e) => {
                            let k = self.eval(e)?;
                            self.to_key(&k)?.name()
                        }
                    };
                    let v = self.eval(value)?;
                    if let ExprKind::Function(f) = &value.kind {
                        if f.name.is_none() {
                            self.name_function(&v, &k);
                        }
                    }
                    self.obj_mut(id).props.insert(k, v);
                }
                ObjProp::Shorthand(name, _) => {
                    let v = self.read_ident(name)?;
                    self.obj_mut(id).props.insert(Rc::from(name.as_str()), v);
                }
                ObjProp::Spread(x) => {
                    let v = self.eval(x)?;
                    if v.is_nullish() {
                        continue;
                    }
                    let keys = self.own_keys(&v)?;
                    self.charge(keys.len() as u64)?;
                    for k in keys {
                        let x = self.get(&v, &Key::from_rc(k.clone()))?;
                        self.obj_mut(id).props.insert(k, x);
                    }
                }
            }
        }
        Ok(Value::Obj(id))
    }

    fn eval_unary(&mut self, op: UnaryOp, arg: &Expr) -> R<Value> {
        match op {
            UnaryOp::TypeOf => {
                if let ExprKind::Ident(name) = &arg.kind {
                    if self.lookup(name).is_none() {
                        return Ok(match self.global_lookup(name)? {
                            Some(v) => Value::str(self.type_of(&v)),
                            None => Value::str("undefined"),
                        });
                    }
                }
                let v = self.eval(arg)?;
                Ok(Value::str(self.type_of(&v)))
            }
            UnaryOp::Delete => match &arg.kind {
                ExprKind::Member { .. } => {
                    let (obj, key) = self.eval_ref(arg)?;
                    Ok(Value::Bool(self.delete(&obj, key)?))
                }
                _ => {
                    self.eval(arg)?;
                    Ok(Value::Bool(true))
                }
            },
            UnaryOp::Void => {
                self.eval(arg)?;
                Ok(Value::Undefined)
            }
            UnaryOp::Not => {
                let v = self.eval(arg)?;
                Ok(Value::Bool(!self.truthy(&v)))
            }
            UnaryOp::Neg => {
                let v = self.eval(arg)?;
                Ok(Value::Num(-self.to_number(&v)?))
            }
            UnaryOp::Plus => {
                let v = self.eval(arg)?;
                Ok(Value::Num(self.to_number(&v)?))
            }
            UnaryOp::BitNot => {
                let v = self.eval(arg)?;
                let n = self.to_number(&v)?;
                Ok(Value::Num(!to_int32(n) as f64))
            }
        }
    }

    fn write_target(&mut self, target: &Expr, v: Value) -> R<()> {
        match &target.kind {
            ExprKind::Ident(name) => self.assign_ident(name, v),
            ExprKind::Paren(inner) => self.write_target(inner, v),
            _ => {
                let (obj, key) = self.eval_ref(target)?;
                self.put(&obj, key, v)
            }
        }
    }

    fn eval_assign(&mut self, op: AssignOp, target: &Pattern, value: &Expr) -> R<Value> {
        match (op, target) {
            (AssignOp::Assign, Pattern::Ident(name, _)) => {
                let v = self.eval(value)?;
                self.assign_ident(name, v.clone())?;
                Ok(v)
            }
            (AssignOp::Assign, Pattern::Expr(e)) => {
                let (obj, key) = self.eval_ref(e)?;
                let v = self.eval(value)?;
                self.cur_pos = e.pos;
                self.put(&obj, key, v.clone())?;
                Ok(v)
            }
            (AssignOp::Assign, pat) => {
                let v = self.eval(value)?;
                self.bind_pattern(pat, v.clone(), Bind::Assign)?;
                Ok(v)
            }
            (op, Pattern::Ident(name, _)) => {
                let cur = self.read_ident(name)?;
                let v = match self.combine(op, cur, value)? {
                    Some(v) => v,
                    None => return self.read_ident(name),
                };
                self.assign_ident(name, v.clone())?;
                Ok(v)
            }
            (op, Pattern::Expr(e)) => {
                let (obj, key) = self.eval_ref(e)?;
                let cur = self.get(&obj, &key)?;
                let v = match self.combine(op, cur.clone(), value)? {
                    Some(v) => v,
                    None => return Ok(cur),
                };
                self.cur_pos = e.pos;
                self.put(&obj, key, v.clone())?;
                Ok(v)
            }
            _ => self.syntax_error("Invalid left-hand side in assignment"),
        }
    }

    /// Value for a compound assignment; `None` when a logical assignment
    /// short-circuits.
    fn combine(&mut self, op: AssignOp, cur: Value, value: &Expr) -> R<Option<Value>> {
        match op {
            AssignOp::Compound(b) => {
                let rhs = self.eval(value)?;
                Ok(Some(self.binop(b, cur, rhs)?))
            }
            AssignOp::Logical(l) => {
                let assign = match l {
                    LogicalOp::And => self.truthy(&cur),
                    LogicalOp::Or => !self.truthy(&cur),
                    LogicalOp::Nullish => cur.is_nullish(),
                };
                if assign {
                    Ok(Some(self.eval(value)?))
                } else {
                    Ok(None)
                }
            }
            AssignOp::Assign => Ok(Some(self.eval(value)?)),
        }
    }

    fn eval_args(&mut self, args: &[Arg]) -> R<Vec<Value>> {
        let mut out = Vec::with_capacity(args.len());
        for a in args {
            match a {
                Arg::Item(x) => out.push(self.eval(x)?),
                Arg::Spread(x) => {
                    let v = self.eval(x)?;
                    let vs = self.iterate(&v)?;
                    self.charge(vs.len() as u64)?;
                    out.extend(vs);
                }
            }
        }
        Ok(out)
    }

    fn eval_chain_part(&mut self, e: &Expr) -> R<Option<Value>> {
        match &e.kind {
            ExprKind::Member { .. } | ExprKind::Call { .. } => {
                self.tick()?;
                self.eval_chain(e)
            }
            _ => Ok(Some(self.eval(e)?)),
        }
    }

    /// Member/call chains; `None` means an optional link short-circuited.
    fn eval_chain(&mut self, e: &Expr) -> R<Option<Value>> {
        match &e.kind {
            ExprKind::Member {
                object,
                prop,
                optional,
            } => {
                let Some(obj) = self.eval_chain_part(object)? else {
                    return Ok(None);
                };
                if *optional && obj.is_nullish() {
                    return Ok(None);
                }
                let key = self.member_key(prop)?;
                self.cur_pos = e.pos;
                Ok(Some(self.get(&obj, &key)?))
            }
            ExprKind::Call {
                callee,
                args,
                optional,
            } => {
                let (this, f) = match &callee.kind {
                    ExprKind::Member {
                        object,
                        prop,
                        optional: mopt,
                    } => {
                        let Some(obj) = self.eval_chain_part(object)? else {
                            return Ok(None);
                        };
                        if *mopt && obj.is_nullish() {
                            return Ok(None);
                        }
                        let key = self.member_key(prop)?;
                        self.cur_pos = callee.pos;
                        let f = self.get(&obj, &key)?;
                        (obj, f)
                    }
                    _ => {
                        let Some(f) = self.eval_chain_part(callee)? else {
                            return Ok(None);
                        };
                        (Value::Undefined, f)
                    }
                };
                if *optional && f.is_nullish() {
                    return Ok(None);
                }
                let argv = self.eval_args(args)?;
                self.cur_pos = e.pos;
                if !self.is_callable(&f) {
                    let text = expr_text(callee);
                    return self.type_error(format!("{text} is not a function"));
                }
                Ok(Some(self.call(&f, this, argv)?))
            }
            _ => Ok(Some(self.eval(e)?)),
        }
    }

    // ---- operators ------------------------------------------------------

    pub(crate) fn binop(&mut self, op: BinOp, a: Value, b: Value) -> R<Value> {
        use BinOp::*;
        Ok(match op {
            Add => {
                let pa = self.to_primitive(&a, false)?;
                let pb = self.to_primitive(&b, false)?;
                if matches!(pa, Value::Str(_)) || matches!(pb, Value::Str(_)) {
                    let sa = self.to_string(&pa)?;
                    let sb = self.to_string(&pb)?;
                    self.check_string_len(sa.len() + sb.len())?;
                    let mut s = String::with_capacity(sa.len() + sb.len());
                    s.push_str(&sa);
                    s.push_str(&sb);
                    Value::str(&s)
                } else {
                    Value::Num(self.to_number(&pa)? + self.to_number(&pb)?)
                }
            }
            Sub => Value::Num(self.to_number(&a)? - self.to_number(&b)?),
            Mul => Value::Num(self.to_number(&a)? * self.to_number(&b)?),
            Div => Value::Num(self.to_number(&a)? / self.to_number(&b)?),
            Rem => Value::Num(self.to_number(&a)? % self.to_number(&b)?),
            Exp => {
                let x = self.to_number(&a)?;
                let y = self.to_number(&b)?;
                Value::Num(js_pow(x, y))
            }
            Eq => Value::Bool(self.loose_eq(&a, &b)?),
            NotEq => Value::Bool(!self.loose_eq(&a, &b)?),
            StrictEq => Value::Bool(a.strict_eq(&b)),
            StrictNotEq => Value::Bool(!a.strict_eq(&b)),
            Lt => Value::Bool(self.compare(&a, &b)? == Some(std::cmp::Ordering::Less)),
            Gt => Value::Bool(self.compare(&a, &b)? == Some(std::cmp::Ordering::Greater)),
            LtEq => Value::Bool(matches!(
                self.compare(&a, &b)?,
                Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
            )),
            GtEq => Value::Bool(matches!(
                self.compare(&a, &b)?,
                Some(std::cmp::Ordering::Greater | std::cmp::Ordering::Equal)
            )),
            BitAnd => Value::Num((self.int32(&a)? & self.int32(&b)?) as f64),
            BitOr => Value::Num((self.int32(&a)? | self.int32(&b)?) as f64),
            BitXor => Value::Num((self.int32(&a)? ^ self.int32(&b)?) as f64),
            Shl => {
                let x = self.int32(&a)?;
                let y = to_uint32(self.to_number(&b)?) & 31;
                Value::Num(x.wrapping_shl(y) as f64)
            }
            Shr => {
                let x = self.int32(&a)?;
                let y = to_uint32(self.to_number(&b)?) & 31;
                Value::Num((x >> y) as f64)
            }
            UShr => {
                let x = to_uint32(self.to_number(&a)?);
                let y = to_uint32(self.to_number(&b)?) & 31;
                Value::Num((x >> y) as f64)
            }
            In => {
                let Value::Obj(id) = b else {
                    let k = self.to_string(&a)?;
                    let s = crate::inspect::inspect(self, &b, false)?;
                    return self.type_error(format!(
                        "Cannot use 'in' operator to search for '{k}' in {s}"
                    ));
                };
                let key = self.to_key(&a)?;
                Value::Bool(self.has_property(id, &key)?)
            }
            InstanceOf => {
                if !self.is_callable(&b) {
                    return self.type_error("Right-hand side of 'instanceof' is not callable");
                }
                let Value::Obj(mut cur) = a else {
                    return Ok(Value::Bool(false));
                };
                let proto = self.get_named(&b, "prototype")?;
                let Some(target) = proto.as_obj() else {
                    return Ok(Value::Bool(false));
                };
                loop {
                    match self.obj(cur).proto {
                        Some(p) if p == target => return Ok(Value::Bool(true)),
                        Some(p) => cur = p,
                        None => return Ok(Value::Bool(false)),
                    }
                }
            }
        })
    }

    fn int32(&mut self, v: &Value) -> R<i32> {
        Ok(to_int32(self.to_number(v)?))
    }

    fn compare(&mut self, a: &Value, b: &Value) -> R<Option<std::cmp::Ordering>> {
        let pa = self.to_primitive(a, false)?;
        let pb = self.to_primitive(b, false)?;
        if let (Value::Str(x), Value::Str(y)) = (&pa, &pb) {
            return Ok(Some(x.cmp(y)));
        }
        let x = self.to_number(&pa)?;
        let y = self.to_number(&pb)?;
        Ok(x.partial_cmp(&y))
    }

    pub(crate) fn loose_eq(&mut self, a: &Value, b: &Value) -> R<bool> {
        Ok(match (a, b) {
            (Value::Undefined | Value::Null, Value::Undefined | Value::Null) => true,
            (Value::Undefined | Value::Null, _) | (_, Value::Undefined | Value::Null) => false,
            (Value::Num(_), Value::Str(_)) | (Value::Str(_), Value::Num(_)) => {
                self.to_number(a)? == self.to_number(b)?
            }
            (Value::Bool(_), _) => {
                let n = Value::Num(self.to_number(a)?);
                self.loose_eq(&n, b)?
            }
            (_, Value::Bool(_)) => {
                let n = Value::Num(self.to_number(b)?);
                self.loose_eq(a, &n)?
            }
            (Value::Obj(_), Value::Obj(_)) => a.strict_eq(b),
            (Value::Obj(_), _) => {
                let p = self.to_primitive(a, false)?;
                self.loose_eq(&p, b)?
            }
            (_, Value::Obj(_)) => {
                let p = self.to_primitive(b, false)?;
                self.loose_eq(a, &p)?
            }
            _ => a.strict_eq(b),
        })
    }
}

pub(crate) fn num_to_json(n: f64) -> Json {
    if !n.is_finite() {
        return Json::Null;
    }
    if n.fract() == 0.0 && n.abs() < 9.007_199_254_740_992e15 {
        if n == 0.0 {
            return Json::from(0);
        }
        return Json::from(n as i64);
    }
    serde_json::Number::from_f64(n).map(Json::Number).unwrap_or(Json::Null)
}

pub(crate) fn js_pow(x: f64, y: f64) -> f64 {
    if y.is_nan() || (x.abs() == 1.0 && y.is_infinite()) {
        return f64::NAN;
    }
    x.powf(y)
}

fn loop_exit(f: Flow, label: Option<&str>) -> Option<Flow> {
    match f {
        Flow::Normal | Flow::Continue(None) => None,
        Flow::Continue(Some(l)) if Some(l.as_str()) == label => None,
        Flow::Break(None) => Some(Flow::Normal),
        Flow::Break(Some(l)) if Some(l.as_str()) == label => Some(Flow::Normal),
        other => Some(other),
    }
}

fn is_lexical_decl(s: &Stmt) -> bool {
    matches!(&s.kind, StmtKind::Decl(d) if d.kind != DeclKind::Var)
        || matches!(s.kind, StmtKind::Function(_))
}

/// Source-like rendering of a callee for error messages.
pub fn expr_text(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Ident(n) => n.clone(),
        ExprKind::This => "this".into(),
        ExprKind::Member { object, prop, optional } => {
            let base = expr_text(object);
            let dot = if *optional { "?." } else { "." };
            match prop {
                MemberProp::Name(n) => format!("{base}{dot}{n}"),
                MemberProp::Computed(inner) => match &inner.kind {
                    ExprKind::Num(n) => format!("{base}[{}]", format_number(*n)),
                    ExprKind::Str(s) => format!("{base}[\"{s}\"]"),
                    _ => format!("{base}[...]"),
                },
            }
        }
        ExprKind::Call { callee, .. } => format!("{}(...)", expr_text(callee)),
        ExprKind::Paren(inner) => expr_text(inner),
        _ => "(intermediate value)".into(),
    }
}

pub(crate) fn pattern_names(p: &Pattern, out: &mut Vec<String>) {
    match p {
        Pattern::Ident(n, _) => out.push(n.clone()),
        Pattern::Expr(_) => {}
        Pattern::Object(props, rest) => {
            for pp in props {
                pattern_names(&pp.value.pattern, out);
            }
            if let Some(r) = rest {
                pattern_names(r, out);
            }
        }
        Pattern::Array(elems, rest) => {
            for e in elems.iter().flatten() {
                pattern_names(&e.pattern, out);
            }
            if let Some(r) = rest {
                pattern_names(r, out);
            }
        }
    }
}

fn collect_vars_stmt(s: &Stmt, out: &mut Vec<Rc<str>>) {
    let push = |p: &Pattern, out: &mut Vec<Rc<str>>| {
        let mut names = Vec::new();
        pattern_names(p, &mut names);
        for n in names {
            if !out.iter().any(|x| **x == *n) {
                out.push(Rc::from(n.as_str()));
            }
        }
    };
    match &s.kind {
        StmtKind::Decl(d) if d.kind == DeclKind::Var => {
            for (p, _) in &d.decls {
                push(p, out);
            }
        }
        StmtKind::If(_, c, a) => {
            collect_vars_stmt(c, out);
            if let Some(a) = a {
                collect_vars_stmt(a, out);
            }
        }
        StmtKind::Block(b) => collect_vars(b, out),
        StmtKind::For { init, body, .. } => {
            if let Some(ForInit::Decl(d)) = init {
                if d.kind == DeclKind::Var {
                    for (p, _) in &d.decls {
                        push(p, out);
                    }
                }
            }
            collect_vars_stmt(body, out);
        }
        StmtKind::ForIn(h, _, body) | StmtKind::ForOf(h, _, body) => {
            if let ForHead::Decl(DeclKind::Var, p) = h {
                push(p, out);
            }
            collect_vars_stmt(body, out);
        }
        StmtKind::While(_, body) | StmtKind::DoWhile(body, _) | StmtKind::Labeled(_, body) => {
            collect_vars_stmt(body, out)
        }
        StmtKind::Try {
            block,
            handler,
            finalizer,
        } => {
            collect_vars(block, out);
            if let Some((_, h)) = handler {
                collect_vars(h, out);
            }
            if let Some(f) = finalizer {
                collect_vars(f, out);
            }
        }
        StmtKind::Switch(_, cases) => {
            for c in cases {
                collect_vars(&c.body, out);
            }
        }
        _ => {}
    }
}

fn collect_vars(stmts: &[Stmt], out: &mut Vec<Rc<str>>) {
    for s in stmts {
        collect_vars_stmt(s, out);
    }
}

/// Builds an ordinary object from key/value pairs.
pub(crate) fn object_from(it: &mut Interp, pairs: Vec<(&str, Value)>) -> R<Value> {
    let id = it.new_object()?;
    let mut props = IndexMap::new();
    for (k, v) in pairs {
        props.insert(Rc::from(k), v);
    }
    it.obj_mut(id).props = props;
    Ok(Value::Obj(id))
}
