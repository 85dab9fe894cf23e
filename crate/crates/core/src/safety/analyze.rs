use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use actscript::ast::{
    Arg, ArrayItem, Expr, ExprKind, ForHead, ForInit, FuncBody, Function, MemberProp, ObjProp,
    Pattern, Pos, Program, PropKey, Stmt, StmtKind, UnaryOp,
};
use actscript::{format_number, SyntaxError};

use super::rules::under;
use super::{invoke_mutates, AccessKind, Decision, Exact, Reason, RuleKind, RuleSet, Verdict};
use crate::host::{surface, Access, SurfaceEntry, ROOT};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyzeError {
    #[error("{0}")]
    Syntax(#[from] SyntaxError),
}

/// Statically checks `source` against `rules`. Over-approximates: every
/// syntactically reachable bridge access counts, through aliases, logical
/// fallbacks and destructuring.
pub fn analyze(source: &str, rules: &RuleSet) -> Result<Verdict, AnalyzeError> {
    let prog = actscript::parse(source)?;
    Ok(analyze_program(&prog, rules))
}

pub fn analyze_program(prog: &Program, rules: &RuleSet) -> Verdict {
    let mut a = Analyzer { mode: Mode::Declare, ..Default::default() };
    a.stmts(&prog.body);
    a.mode = Mode::Bind;
    for _ in 0..8 {
        a.changed = false;
        a.stmts(&prog.body);
        if !a.changed {
            break;
        }
    }
    a.mode = Mode::Sites;
    a.stmts(&prog.body);
    a.verdict(rules)
}

/// Abstract value of an expression as far as the bridge is concerned.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Abs {
    /// A literal bridge path.
    Path(String),
    /// Something below this path reached through a computed property.
    Dyn(String),
    /// The list returned by `app.ui.find`.
    Handles,
    /// One element of that list.
    Handle,
}

type Vals = BTreeSet<Abs>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum Mode {
    #[default]
    Declare,
    Bind,
    Sites,
}

#[derive(Debug, Clone)]
enum Target {
    Path(String),
    Dyn(String),
}

#[derive(Debug, Clone)]
struct Site {
    kind: AccessKind,
    target: Target,
    pos: Pos,
    /// Sites produced by one syntax node share a group.
    group: usize,
}

#[derive(Default)]
struct Analyzer {
    mode: Mode,
    changed: bool,
    declared: BTreeSet<String>,
    aliases: BTreeMap<String, Vals>,
    functions: BTreeMap<String, Vec<Rc<Function>>>,
    sites: Vec<Site>,
    globals: Vec<(String, Pos)>,
    groups: usize,
}

const ARRAY_MUTATORS: [&str; 9] =
    ["push", "pop", "shift", "unshift", "splice", "sort", "reverse", "fill", "copyWithin"];
const LIST_PRESERVING: [&str; 7] =
    ["filter", "slice", "reverse", "concat", "sort", "toSorted", "toReversed"];
const ELEMENT_PICKING: [&str; 5] = ["find", "at", "pop", "shift", "findLast"];
const CALLBACK_METHODS: [&str; 9] =
    ["forEach", "map", "filter", "find", "some", "every", "findIndex", "findLast", "flatMap"];
const REFLECTIVE_WRITERS: [&str; 7] = [
    "Object.assign",
    "Object.defineProperty",
    "Object.defineProperties",
    "Object.setPrototypeOf",
    "Reflect.set",
    "Reflect.defineProperty",
    "Reflect.deleteProperty",
];

fn entry_of(path: &str) -> Option<&'static SurfaceEntry> {
    surface()
        .iter()
        .filter(|e| under(path, e.path))
        .max_by_key(|e| e.path.len())
}

/// Paths at or below a readable data entry (as opposed to namespaces and
/// methods).
fn is_data(path: &str) -> bool {
    matches!(entry_of(path).map(|e| e.access), Some(Access::Read | Access::ReadWrite))
}

/// The surface entry a write below `path` lands on.
fn write_target(path: &str) -> String {
    match entry_of(path) {
        Some(e) if is_data(path) => e.path.to_string(),
        _ => path.to_string(),
    }
}

enum Key {
    Name(String),
    Dynamic,
}

fn key_of(prop: &MemberProp) -> Key {
    match prop {
        MemberProp::Name(n) => Key::Name(n.to_string()),
        MemberProp::Computed(e) => match &e.kind {
            ExprKind::Str(s) => Key::Name(s.to_string()),
            ExprKind::Num(n) => Key::Name(format_number(*n)),
            _ => Key::Dynamic,
        },
    }
}

fn is_index(k: &Key) -> bool {
    match k {
        Key::Name(n) => n.parse::<usize>().is_ok(),
        Key::Dynamic => true,
    }
}

impl Analyzer {
    fn declare(&mut self, name: &str) {
        if self.mode == Mode::Declare {
            self.declared.insert(name.to_string());
        }
    }

    fn is_root(&self, name: &str) -> bool {
        name == ROOT && !self.declared.contains(ROOT)
    }

    // ---- abstract evaluation ------------------------------------------

    fn member(&self, vals: &Vals, key: &Key) -> Vals {
        let mut out = Vals::new();
        for v in vals {
            match v {
                Abs::Path(p) if is_data(p) => match key {
                    Key::Name(n) if !is_index(key) => {
                        out.insert(Abs::Path(format!("{p}.{n}")));
                    }
                    _ => {
                        out.insert(Abs::Path(p.clone()));
                    }
                },
                Abs::Path(p) => {
                    out.insert(match key {
                        Key::Name(n) => Abs::Path(format!("{p}.{n}")),
                        Key::Dynamic => Abs::Dyn(p.clone()),
                    });
                }
                Abs::Dyn(p) => {
                    out.insert(Abs::Dyn(p.clone()));
                }
                Abs::Handles => {
                    if is_index(key) {
                        out.insert(Abs::Handle);
                    }
                }
                Abs::Handle => {
                    if matches!(key, Key::Name(n) if n == "click") {
                        out.insert(Abs::Path("app.ui.click".into()));
                    }
                }
            }
        }
        out
    }

    fn elements(&self, vals: &Vals) -> Vals {
        vals.iter()
            .filter_map(|v| match v {
                Abs::Handles => Some(Abs::Handle),
                Abs::Path(p) if is_data(p) => Some(Abs::Path(p.clone())),
                Abs::Path(p) | Abs::Dyn(p) => Some(Abs::Dyn(p.clone())),
                Abs::Handle => None,
            })
            .collect()
    }

    fn resolve(&self, e: &Expr) -> Vals {
        match &e.kind {
            ExprKind::Ident(n) => {
                let mut out = self.aliases.get(n).cloned().unwrap_or_default();
                if self.is_root(n) {
                    out.insert(Abs::Path(ROOT.into()));
                }
                out
            }
            ExprKind::Member { object, prop, .. } => self.member(&self.resolve(object), &key_of(prop)),
            ExprKind::Logical(_, a, b) | ExprKind::Cond(_, a, b) => {
                let mut out = self.resolve(a);
                out.extend(self.resolve(b));
                out
            }
            ExprKind::Paren(x) | ExprKind::Await(x) => self.resolve(x),
            ExprKind::Seq(xs) => xs.last().map(|x| self.resolve(x)).unwrap_or_default(),
            ExprKind::Assign { value, .. } => self.resolve(value),
            ExprKind::Call { callee, .. } => self.call_result(callee),
            _ => Vals::new(),
        }
    }

    fn call_result(&self, callee: &Expr) -> Vals {
        let mut out = Vals::new();
        if let ExprKind::Member { object, prop: MemberProp::Name(m), .. } = &callee.kind {
            for o in self.resolve(object) {
                match o {
                    Abs::Handles if LIST_PRESERVING.contains(&&**m) => {
                        out.insert(Abs::Handles);
                    }
                    Abs::Handles if ELEMENT_PICKING.contains(&&**m) => {
                        out.insert(Abs::Handle);
                    }
                    Abs::Path(p) if is_data(&p) && ELEMENT_PICKING.contains(&&**m) => {
                        out.insert(Abs::Path(p));
                    }
                    Abs::Path(p) if &**m == "bind" => {
                        out.insert(Abs::Path(p));
                    }
                    _ => {}
                }
            }
        }
        if self.resolve(callee).contains(&Abs::Path("app.ui.find".into())) {
            out.insert(Abs::Handles);
        }
        out
    }

    fn bind(&mut self, pat: &Pattern, vals: &Vals) {
        match pat {
            Pattern::Ident(n, _) => {
                if vals.is_empty() {
                    return;
                }
                let slot = self.aliases.entry(n.clone()).or_default();
                let before = slot.len();
                slot.extend(vals.iter().cloned());
                if slot.len() != before {
                    self.changed = true;
                }
            }
            Pattern::Expr(_) => {}
            Pattern::Object(props, _) => {
                for p in props {
                    let key = match &p.key {
                        PropKey::Name(n) => Key::Name(n.to_string()),
                        PropKey::Computed(e) => match &e.kind {
                            ExprKind::Str(s) => Key::Name(s.to_string()),
                            _ => Key::Dynamic,
                        },
                    };
                    let sub = self.member(vals, &key);
                    self.bind(&p.value.pattern, &sub);
                }
            }
            Pattern::Array(items, rest) => {
                let el = self.elements(vals);
                for it in items.iter().flatten() {
                    self.bind(&it.pattern, &el);
                }
                if let Some(r) = rest {
                    self.bind(r, vals);
                }
            }
        }
    }

    // ---- site recording -----------------------------------------------

    fn group(&mut self) -> usize {
        self.groups += 1;
        self.groups
    }

    fn record(&mut self, kind: AccessKind, vals: &Vals, pos: Pos) {
        let group = self.group();
        for v in vals {
            let target = match (v, kind) {
                (Abs::Path(p), AccessKind::Write) => Target::Path(write_target(p)),
                (Abs::Path(p), AccessKind::Invoke) => {
                    if is_data(p) {
                        continue;
                    }
                    let p = match p.rsplit_once('.') {
                        Some((parent, "call" | "apply"))
                            if matches!(entry_of(parent).map(|e| e.access), Some(Access::Method { .. })) =>
                        {
                            parent.to_string()
                        }
                        _ => p.clone(),
                    };
                    Target::Path(p)
                }
                (Abs::Path(p), AccessKind::Read) => Target::Path(p.clone()),
                (Abs::Dyn(p), _) => Target::Dyn(p.clone()),
                _ => continue,
            };
            self.sites.push(Site { kind, target, pos, group });
        }
    }

    fn record_write_target(&mut self, target: &Expr) {
        let vals = self.resolve(target);
        self.record(AccessKind::Write, &vals, target.pos);
    }

    // ---- traversal ----------------------------------------------------

    fn stmts(&mut self, ss: &[Stmt]) {
        for s in ss {
            self.stmt(s);
        }
    }

    fn decl_pattern(&mut self, p: &Pattern) {
        match p {
            Pattern::Ident(n, _) => self.declare(n),
            Pattern::Expr(e) => self.expr(e),
            Pattern::Object(props, rest) => {
                for pp in props {
                    if let PropKey::Computed(k) = &pp.key {
                        self.expr(k);
                    }
                    self.decl_pattern(&pp.value.pattern);
                    if let Some(d) = &pp.value.default {
                        self.expr(d);
                    }
                }
                if let Some(r) = rest {
                    self.decl_pattern(r);
                }
            }
            Pattern::Array(items, rest) => {
                for it in items.iter().flatten() {
                    self.decl_pattern(&it.pattern);
                    if let Some(d) = &it.default {
                        self.expr(d);
                    }
                }
                if let Some(r) = rest {
                    self.decl_pattern(r);
                }
            }
        }
    }

    /// Assignment targets: member expressions inside are writes.
    fn target_pattern(&mut self, p: &Pattern) {
        match p {
            Pattern::Ident(..) => {}
            Pattern::Expr(e) => self.write_expr(e),
            Pattern::Object(props, rest) => {
                for pp in props {
                    if let PropKey::Computed(k) = &pp.key {
                        self.expr(k);
                    }
                    self.target_pattern(&pp.value.pattern);
                    if let Some(d) = &pp.value.default {
                        self.expr(d);
                    }
                }
                if let Some(r) = rest {
                    self.target_pattern(r);
                }
            }
            Pattern::Array(items, rest) => {
                for it in items.iter().flatten() {
                    self.target_pattern(&it.pattern);
                    if let Some(d) = &it.default {
                        self.expr(d);
                    }
                }
                if let Some(r) = rest {
                    self.target_pattern(r);
                }
            }
        }
    }

    /// A member expression being written: its object is read, the member
    /// itself is a write site.
    fn write_expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Member { object, prop, .. } => {
                self.expr(object);
                if let MemberProp::Computed(k) = prop {
                    self.expr(k);
                }
                if self.mode == Mode::Sites {
                    self.record_write_target(e);
                }
            }
            ExprKind::Paren(x) => self.write_expr(x),
            _ => self.expr(e),
        }
    }

    fn var_decl(&mut self, d: &actscript::ast::VarDecl) {
        for (pat, init) in &d.decls {
            self.decl_pattern(pat);
            if let Some(init) = init {
                self.expr(init);
                if self.mode == Mode::Bind {
                    let v = self.resolve(init);
                    self.bind(pat, &v);
                }
                if let (Pattern::Ident(n, _), ExprKind::Function(f)) = (pat, &init.kind) {
                    if self.mode == Mode::Declare {
                        self.functions.entry(n.clone()).or_default().push(f.clone());
                    }
                }
            }
        }
    }

    fn for_head(&mut self, h: &ForHead, iter: &Expr, of: bool) {
        let pat = match h {
            ForHead::Decl(_, p) => {
                self.decl_pattern(p);
                p
            }
            ForHead::Target(p) => {
                self.target_pattern(p);
                p
            }
        };
        if of && self.mode == Mode::Bind {
            let el = self.elements(&self.resolve(iter));
            self.bind(pat, &el);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Expr(e) | StmtKind::Throw(e) => self.expr(e),
            StmtKind::Decl(d) => self.var_decl(d),
            StmtKind::Function(f) => {
                if let Some(n) = &f.name {
                    self.declare(n);
                    if self.mode == Mode::Declare {
                        self.functions.entry(n.clone()).or_default().push(f.clone());
                    }
                }
                self.function(f);
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    self.expr(e);
                }
            }
            StmtKind::If(c, a, b) => {
                self.expr(c);
                self.stmt(a);
                if let Some(b) = b {
                    self.stmt(b);
                }
            }
            StmtKind::Block(ss) => self.stmts(ss),
            StmtKind::For { init, test, update, body } => {
                match init {
                    Some(ForInit::Decl(d)) => self.var_decl(d),
                    Some(ForInit::Expr(e)) => self.expr(e),
                    None => {}
                }
                for e in test.iter().chain(update.iter()) {
                    self.expr(e);
                }
                self.stmt(body);
            }
            StmtKind::ForIn(h, e, body) => {
                self.expr(e);
                self.for_head(h, e, false);
                self.stmt(body);
            }
            StmtKind::ForOf(h, e, body) => {
                self.expr(e);
                self.for_head(h, e, true);
                self.stmt(body);
            }
            StmtKind::While(c, body) | StmtKind::DoWhile(body, c) => {
                self.expr(c);
                self.stmt(body);
            }
            StmtKind::Try { block, handler, finalizer } => {
                self.stmts(block);
                if let Some((p, body)) = handler {
                    if let Some(p) = p {
                        self.decl_pattern(p);
                    }
                    self.stmts(body);
                }
                if let Some(f) = finalizer {
                    self.stmts(f);
                }
            }
            StmtKind::Switch(e, cases) => {
                self.expr(e);
                for c in cases {
                    if let Some(t) = &c.test {
                        self.expr(t);
                    }
                    self.stmts(&c.body);
                }
            }
            StmtKind::Labeled(_, body) => self.stmt(body),
            StmtKind::Break(_) | StmtKind::Continue(_) | StmtKind::Empty => {}
        }
    }

    fn function(&mut self, f: &Function) {
        for p in &f.params {
            self.decl_pattern(&p.pattern);
            if let Some(d) = &p.default {
                self.expr(d);
            }
        }
        match &f.body {
            FuncBody::Block(ss) => self.stmts(ss),
            FuncBody::Expr(e) => self.expr(e),
        }
    }

    fn args(&mut self, args: &[Arg]) {
        for a in args {
            match a {
                Arg::Item(e) | Arg::Spread(e) => self.expr(e),
            }
        }
    }

    fn bind_call(&mut self, callee: &Expr, args: &[Arg]) {
        // Callbacks over handle lists or bound arrays see the elements.
        if let ExprKind::Member { object, prop: MemberProp::Name(m), .. } = &callee.kind {
            if CALLBACK_METHODS.contains(&&**m) {
                if let Some(Arg::Item(Expr { kind: ExprKind::Function(f), .. })) = args.first() {
                    let el = self.elements(&self.resolve(object));
                    if let Some(p) = f.params.first() {
                        self.bind(&p.pattern, &el);
                    }
                }
            }
        }
        // Calls to named local functions bind their parameters.
        if let ExprKind::Ident(n) = &callee.kind {
            if let Some(fs) = self.functions.get(n).cloned() {
                for f in fs {
                    for (p, a) in f.params.iter().zip(args) {
                        if let Arg::Item(a) = a {
                            let v = self.resolve(a);
                            self.bind(&p.pattern, &v);
                        }
                    }
                }
            }
        }
    }

    fn site_call(&mut self, e: &Expr, callee: &Expr, args: &[Arg]) {
        let vals = self.resolve(callee);
        self.record(AccessKind::Invoke, &vals, e.pos);
        if let ExprKind::Member { object, prop: MemberProp::Name(m), .. } = &callee.kind {
            if ARRAY_MUTATORS.contains(&&**m) {
                let owners: Vals = self
                    .resolve(object)
                    .into_iter()
                    .filter(|v| matches!(v, Abs::Path(p) if is_data(p)) || matches!(v, Abs::Dyn(_)))
                    .collect();
                self.record(AccessKind::Write, &owners, e.pos);
            }
        }
        let name = actscript::expr_text(callee);
        if REFLECTIVE_WRITERS.contains(&name.as_str()) {
            if let Some(Arg::Item(first)) = args.first() {
                let dyns: Vals = self
                    .resolve(first)
                    .into_iter()
                    .filter_map(|v| match v {
                        Abs::Path(p) if is_data(&p) => Some(Abs::Path(p)),
                        Abs::Path(p) | Abs::Dyn(p) => Some(Abs::Dyn(p)),
                        _ => None,
                    })
                    .collect();
                self.record(AccessKind::Write, &dyns, e.pos);
            }
        }
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Num(_) | ExprKind::Str(_) | ExprKind::Bool(_) | ExprKind::Null | ExprKind::This => {}
            ExprKind::Template(_, xs) | ExprKind::Seq(xs) => {
                for x in xs {
                    self.expr(x);
                }
            }
            ExprKind::Ident(n) => {
                if self.mode == Mode::Sites && !self.declared.contains(n) {
                    self.globals.push((n.clone(), e.pos));
                    if n == ROOT {
                        let group = self.group();
                        self.sites.push(Site {
                            kind: AccessKind::Read,
                            target: Target::Path(ROOT.into()),
                            pos: e.pos,
                            group,
                        });
                    }
                }
            }
            ExprKind::Array(items) => {
                for it in items {
                    if let ArrayItem::Item(x) | ArrayItem::Spread(x) = it {
                        self.expr(x);
                    }
                }
            }
            ExprKind::Object(props) => {
                for p in props {
                    match p {
                        ObjProp::KeyValue(k, v) => {
                            if let PropKey::Computed(k) = k {
                                self.expr(k);
                            }
                            self.expr(v);
                        }
                        ObjProp::Shorthand(n, pos) => {
                            self.expr(&Expr::new(*pos, ExprKind::Ident(n.clone())));
                        }
                        ObjProp::Spread(x) => self.expr(x),
                    }
                }
            }
            ExprKind::Function(f) => self.function(f),
            ExprKind::Unary(op, x) => {
                if *op == UnaryOp::Delete {
                    self.write_expr(x);
                } else {
                    self.expr(x);
                }
            }
            ExprKind::Update { target, .. } => self.write_expr(target),
            ExprKind::Binary(_, a, b) | ExprKind::Logical(_, a, b) => {
                self.expr(a);
                self.expr(b);
            }
            ExprKind::Assign { target, value, .. } => {
                self.expr(value);
                self.target_pattern(target);
                if self.mode == Mode::Bind {
                    let v = self.resolve(value);
                    self.bind(target, &v);
                }
            }
            ExprKind::Cond(c, a, b) => {
                self.expr(c);
                self.expr(a);
                self.expr(b);
            }
            ExprKind::Call { callee, args, .. } => {
                self.expr(callee);
                self.args(args);
                match self.mode {
                    Mode::Bind => self.bind_call(callee, args),
                    Mode::Sites => self.site_call(e, callee, args),
                    Mode::Declare => {}
                }
            }
            ExprKind::New { callee, args } => {
                self.expr(callee);
                self.args(args);
            }
            ExprKind::Member { object, prop, .. } => {
                self.expr(object);
                if let MemberProp::Computed(k) = prop {
                    self.expr(k);
                }
                if self.mode == Mode::Sites {
                    let vals = self.resolve(e);
                    self.record(AccessKind::Read, &vals, e.pos);
                }
            }
            ExprKind::Paren(x) | ExprKind::Await(x) => self.expr(x),
        }
    }

    // ---- verdict ------------------------------------------------------

    fn verdict(&self, rules: &RuleSet) -> Verdict {
        let mut findings: Vec<(Decision, Reason)> = Vec::new();
        let reason = |reason: String, site: String, pos: Pos| Reason { reason, site, line: pos.line, col: pos.col };
        let mut seen_globals = BTreeSet::new();
        for (name, pos) in &self.globals {
            if let Exact::Deny(r) = rules.evaluate_global(name) {
                if seen_globals.insert((name.clone(), *pos)) {
                    findings.push((Decision::Deny, reason(r, format!("global {name}"), *pos)));
                }
            }
        }
        for s in &self.sites {
            let verb = match s.kind {
                AccessKind::Read => "read",
                AccessKind::Write => "write",
                AccessKind::Invoke => "call",
            };
            match &s.target {
                Target::Path(p) => {
                    let site = format!("{verb} {p}");
                    match rules.evaluate(p, s.kind) {
                        Exact::Allow => {}
                        Exact::Deny(r) => findings.push((Decision::Deny, reason(r, site, s.pos))),
                        Exact::NeedsApproval(r) => {
                            findings.push((Decision::NeedsApproval, reason(r, site, s.pos)))
                        }
                    }
                }
                Target::Dyn(prefix) => {
                    if let Some(r) = dynamic_concern(rules, prefix, s.kind) {
                        let site = format!("{verb} {prefix}[<computed>]");
                        findings.push((
                            Decision::NeedsApproval,
                            reason(format!("computed property path may reach a rule: {r}"), site, s.pos),
                        ));
                    }
                }
            }
        }
        if let Some(t) = rules.write_threshold {
            let mut groups: BTreeMap<usize, (Vec<String>, Pos)> = BTreeMap::new();
            for s in &self.sites {
                let writes = match (&s.target, s.kind) {
                    (_, AccessKind::Write) => true,
                    (Target::Path(p), AccessKind::Invoke) => invoke_mutates(p),
                    (Target::Dyn(_), AccessKind::Invoke) => true,
                    _ => false,
                };
                if writes {
                    let key = match &s.target {
                        Target::Path(p) => p.clone(),
                        Target::Dyn(p) => format!("{p}[<computed>]@{}", s.pos),
                    };
                    let g = groups.entry(s.group).or_insert((Vec::new(), s.pos));
                    g.0.push(key);
                }
            }
            let mut distinct: BTreeMap<Vec<String>, Pos> = BTreeMap::new();
            for (mut keys, pos) in groups.into_values() {
                keys.sort();
                keys.dedup();
                distinct.entry(keys).or_insert(pos);
            }
            if distinct.len() >= t {
                let pos = *distinct.values().max().unwrap();
                findings.push((
                    Decision::NeedsApproval,
                    reason(
                        format!("script writes {} distinct state paths (threshold {t})", distinct.len()),
                        "write threshold".into(),
                        pos,
                    ),
                ));
            }
        }
        findings.sort_by_key(|(_, r)| (r.line, r.col));
        findings.dedup();
        Verdict::from_findings(findings)
    }
}

/// Whether a computed access below `prefix` could hit a restricting rule.
fn dynamic_concern(rules: &RuleSet, prefix: &str, kind: AccessKind) -> Option<String> {
    let compatible = |lit: &str| lit.starts_with(prefix) || prefix.starts_with(lit.trim_end_matches('.'));
    for r in &rules.rules {
        let relevant = match r.kind {
            RuleKind::DenyGlobal => false,
            RuleKind::DenyCall => kind == AccessKind::Invoke,
            RuleKind::DenyWrite | RuleKind::RequireApproval => kind != AccessKind::Read,
            RuleKind::AllowlistMode => {
                if !r.allowlisted(prefix) {
                    return Some(r.reason.clone());
                }
                false
            }
        };
        if relevant && r.literal_prefixes().any(compatible) {
            return Some(r.reason.clone());
        }
    }
    if rules.default == super::DefaultDecision::Deny {
        return Some("default deny".into());
    }
    None
}
