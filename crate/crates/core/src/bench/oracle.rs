//! Oracle predicates: small boolean expressions over the host state before
//! and after a task.
//!
//! ```text
//! expr  := and ("||" and)*
//! and   := not ("&&" not)*
//! not   := "!" not | cmp
//! cmp   := sum (("==" | "!=" | "<" | "<=" | ">" | ">=" | "contains") sum)?
//! sum   := unary (("+" | "-") unary)*
//! unary := "-" unary | atom
//! atom  := number | "string" | true | false | null | "(" expr ")"
//!        | fn "(" expr ("," expr)* ")" | path
//! path  := name ("." (name | index))*
//! fn    := len | take | lower | abs | last
//! ```
//!
//! Paths resolve against a view of the final state: the serialized host
//! state plus `active_document`, `active_tab`, `current_track` and
//! `console` (lines printed by the last run). The same view of the state
//! before the task is under `initial`. Numbers compare within 1e-9.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value as Json};

use crate::host::HostState;

const EPS: f64 = 1e-9;
const ROOTS: [&str; 11] = [
    "player",
    "library",
    "editor",
    "documents",
    "current_route",
    "logical_clock",
    "active_document",
    "active_tab",
    "current_track",
    "console",
    "initial",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("oracle path '{0}' does not exist")]
pub struct OraclePathError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error(transparent)]
    Path(#[from] OraclePathError),
    #[error("oracle type error: {0}")]
    Type(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Op(&'static str),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, OracleError> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |offset, message: &str| OracleError::Syntax { offset, message: message.into() };
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == b'"' || c == b'\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match src[i..].chars().next() {
                    None => return Err(err(start, "unterminated string")),
                    Some('\\') => {
                        let n = src[i + 1..].chars().next().ok_or_else(|| err(i, "dangling escape"))?;
                        s.push(match n {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        i += 1 + n.len_utf8();
                    }
                    Some(ch) if ch as u32 == c as u32 => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push((start, Tok::Str(s)));
        } else if c.is_ascii_digit() {
            let index = matches!(out.last(), Some((_, Tok::Op("."))));
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if !index && i + 1 < b.len() && b[i] == b'.' && b[i + 1].is_ascii_digit() {
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let n = src[start..i].parse().map_err(|_| err(start, "bad number"))?;
            out.push((start, Tok::Num(n)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let two = src.get(i..i + 2).unwrap_or("");
            let op = ["==", "!=", "<=", ">=", "&&", "||"].into_iter().find(|o| *o == two);
            let op = match op {
                Some(o) => o,
                None => match c {
                    b'<' => "<",
                    b'>' => ">",
                    b'!' => "!",
                    b'+' => "+",
                    b'-' => "-",
                    b'(' => "(",
                    b')' => ")",
                    b',' => ",",
                    b'.' => ".",
                    _ => return Err(err(start, &format!("unexpected character '{}'", src[i..].chars().next().unwrap()))),
                },
            };
            i += op.len();
            out.push((start, Tok::Op(op)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Lit(Json),
    Path(Vec<String>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Bin(&'static str, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, OracleError> {
        Err(OracleError::Syntax { offset: self.offset(), message: message.into() })
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), OracleError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.err(format!("expected '{op}'"))
        }
    }

    fn or(&mut self) -> Result<Expr, OracleError> {
        let mut l = self.and()?;
        while self.eat_op("||") {
            l = Expr::Bin("||", Box::new(l), Box::new(self.and()?));
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Expr, OracleError> {
        let mut l = self.not()?;
        while self.eat_op("&&") {
            l = Expr::Bin("&&", Box::new(l), Box::new(self.not()?));
        }
        Ok(l)
    }

    fn not(&mut self) -> Result<Expr, OracleError> {
        if self.eat_op("!") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, OracleError> {
        let l = self.sum()?;
        for op in ["==", "!=", "<=", ">=", "<", ">"] {
            if self.eat_op(op) {
                return Ok(Expr::Bin(op, Box::new(l), Box::new(self.sum()?)));
            }
        }
        if matches!(self.peek(), Some(Tok::Ident(w)) if w == "contains") {
            self.pos += 1;
            return Ok(Expr::Bin("contains", Box::new(l), Box::new(self.sum()?)));
        }
        Ok(l)
    }

    fn sum(&mut self) -> Result<Expr, OracleError> {
        let mut l = self.unary()?;
        loop {
            if self.eat_op("+") {
                l = Expr::Bin("+", Box::new(l), Box::new(self.unary()?));
            } else if self.eat_op("-") {
                l = Expr::Bin("-", Box::new(l), Box::new(self.unary()?));
            } else {
                return Ok(l);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, OracleError> {
        if self.eat_op("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, OracleError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.err("unexpected end of expression"),
        };
        self.pos += 1;
        match tok {
            Tok::Num(n) => Ok(Expr::Lit(json!(n))),
            Tok::Str(s) => Ok(Expr::Lit(Json::String(s))),
            Tok::Op("(") => {
                let e = self.or()?;
                self.expect_op(")")?;
                Ok(e)
            }
            Tok::Ident(w) if w == "true" => Ok(Expr::Lit(Json::Bool(true))),
            Tok::Ident(w) if w == "false" => Ok(Expr::Lit(Json::Bool(false))),
            Tok::Ident(w) if w == "null" => Ok(Expr::Lit(Json::Null)),
            Tok::Ident(w) if self.eat_op("(") => {
                let arity = match w.as_str() {
                    "len" | "lower" | "abs" | "last" => 1,
                    "take" => 2,
                    _ => {
                        self.pos -= 2;
                        return self.err(format!("unknown function '{w}'"));
                    }
                };
                let mut args = vec![self.or()?];
                while self.eat_op(",") {
                    args.push(self.or()?);
                }
                if args.len() != arity {
                    return self.err(format!("{w} takes {arity} argument(s)"));
                }
                self.expect_op(")")?;
                Ok(Expr::Call(w, args))
            }
            Tok::Ident(w) => {
                if !ROOTS.contains(&w.as_str()) {
                    self.pos -= 1;
                    return self.err(format!("unknown root '{w}'"));
                }
                let mut path = vec![w];
                while self.eat_op(".") {
                    match self.peek().cloned() {
                        Some(Tok::Ident(s)) => path.push(s),
                        Some(Tok::Num(n)) if n.fract() == 0.0 && n >= 0.0 => path.push((n as u64).to_string()),
                        _ => return self.err("expected a field name or index after '.'"),
                    }
                    self.pos += 1;
                }
                Ok(Expr::Path(path))
            }
            Tok::Op(o) => {
                self.pos -= 1;
                self.err(format!("unexpected '{o}'"))
            }
        }
    }
}

/// A parsed predicate; serializes as its source text.
#[derive(Debug, Clone)]
pub struct Oracle {
    source: String,
    expr: Expr,
}

impl PartialEq for Oracle {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Oracle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Oracle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Oracle::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Key-value view of a state that oracle paths resolve against.
pub fn state_view(state: &HostState, console: &[String]) -> Json {
    let mut v = state.to_json();
    let m = v.as_object_mut().expect("state is an object");
    m.insert("active_document".into(), serde_json::to_value(state.active_document()).expect("serializes"));
    m.insert("active_tab".into(), serde_json::to_value(state.active_tab()).expect("serializes"));
    m.insert("current_track".into(), serde_json::to_value(state.current_track()).expect("serializes"));
    m.insert("console".into(), json!(console));
    v
}

impl Oracle {
    pub fn parse(source: &str) -> Result<Oracle, OracleError> {
        let toks = lex(source)?;
        let mut p = Parser { toks, pos: 0, end: source.len() };
        let expr = p.or()?;
        if p.pos != p.toks.len() {
            return p.err("unexpected trailing input");
        }
        Ok(Oracle { source: source.to_string(), expr })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Every path the predicate reads, dotted.
    pub fn paths(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Path(p) => out.push(p.join(".")),
                Expr::Not(x) | Expr::Neg(x) => walk(x, out),
                Expr::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
                Expr::Lit(_) => {}
            }
        }
        let mut out = Vec::new();
        walk(&self.expr, &mut out);
        out
    }

    /// Checks that every path exists when both states are `state`.
    pub fn check_paths(&self, state: &HostState) -> Result<(), OraclePathError> {
        let view = state_view(state, &[]);
        let env = Env { fin: &view, initial: &view };
        for p in self.paths() {
            let segs: Vec<String> = p.split('.').map(String::from).collect();
            env.resolve(&segs)?;
        }
        Ok(())
    }

    pub fn evaluate(&self, initial: &HostState, fin: &HostState, console: &[String]) -> Result<bool, OracleError> {
        let i = state_view(initial, &[]);
        let f = state_view(fin, console);
        match (Env { fin: &f, initial: &i }).eval(&self.expr)? {
            Json::Bool(b) => Ok(b),
            other => Err(OracleError::Type(format!("predicate produced {other}, not a boolean"))),
        }
    }
}

struct Env<'a> {
    fin: &'a Json,
    initial: &'a Json,
}

fn num(v: &Json, what: &str) -> Result<f64, OracleError> {
    v.as_f64().ok_or_else(|| OracleError::Type(format!("{what} needs a number, got {v}")))
}

fn equal(a: &Json, b: &Json) -> bool {
    match (a, b) {
        (Json::Number(x), Json::Number(y)) => (x.as_f64().unwrap_or(f64::NAN) - y.as_f64().unwrap_or(f64::NAN)).abs() <= EPS,
        (Json::Array(x), Json::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| equal(p, q)),
        (Json::Object(x), Json::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, p)| y.get(k).is_some_and(|q| equal(p, q)))
        }
        _ => a == b,
    }
}

impl Env<'_> {
    fn resolve(&self, path: &[String]) -> Result<Json, OraclePathError> {
        let (mut cur, rest) = match path[0].as_str() {
            "initial" if path.len() > 1 => (self.initial, &path[1..]),
            _ => (self.fin, path),
        };
        for seg in rest {
            cur = match cur {
                Json::Object(m) => m.get(seg),
                Json::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get(i)),
                _ => None,
            }
            .ok_or_else(|| OraclePathError(path.join(".")))?;
        }
        Ok(cur.clone())
    }

    fn eval(&self, e: &Expr) -> Result<Json, OracleError> {
        Ok(match e {
            Expr::Lit(v) => v.clone(),
            Expr::Path(p) => self.resolve(p)?,
            Expr::Not(x) => match self.eval(x)? {
                Json::Bool(b) => Json::Bool(!b),
                v => return Err(OracleError::Type(format!("'!' needs a boolean, got {v}"))),
            },
            Expr::Neg(x) => json!(-num(&self.eval(x)?, "'-'")?),
            Expr::Bin(op @ ("&&" | "||"), a, b) => {
                let l = self.eval(a)?.as_bool().ok_or_else(|| OracleError::Type(format!("'{op}' needs booleans")))?;
                if (*op == "&&" && !l) || (*op == "||" && l) {
                    return Ok(Json::Bool(l));
                }
                let r = self.eval(b)?.as_bool().ok_or_else(|| OracleError::Type(format!("'{op}' needs booleans")))?;
                Json::Bool(r)
            }
            Expr::Bin(op, a, b) => {
                let (l, r) = (self.eval(a)?, self.eval(b)?);
                match *op {
                    "==" => Json::Bool(equal(&l, &r)),
                    "!=" => Json::Bool(!equal(&l, &r)),
                    "<" | "<=" | ">" | ">=" => {
                        let (x, y) = (num(&l, op)?, num(&r, op)?);
                        Json::Bool(match *op {
                            "<" => x < y - EPS,
                            "<=" => x <= y + EPS,
                            ">" => x > y + EPS,
                            _ => x >= y - EPS,
                        })
                    }
                    "contains" => Json::Bool(match (&l, &r) {
                        (Json::String(s), Json::String(t)) => s.contains(t.as_str()),
                        (Json::Array(xs), _) => xs.iter().any(|x| {
                            equal(x, &r) || matches!((x, &r), (Json::String(s), Json::String(t)) if s.contains(t.as_str()))
                        }),
                        _ => return Err(OracleError::Type(format!("'contains' needs text or a list, got {l}"))),
                    }),
                    "+" => match (&l, &r) {
                        (Json::String(s), Json::String(t)) => Json::String(format!("{s}{t}")),
                        _ => json!(num(&l, "'+'")? + num(&r, "'+'")?),
                    },
                    "-" => json!(num(&l, "'-'")? - num(&r, "'-'")?),
                    _ => unreachable!("parser only builds known operators"),
                }
            }
            Expr::Call(f, args) => {
                let v: Vec<Json> = args.iter().map(|a| self.eval(a)).collect::<Result<_, _>>()?;
                match (f.as_str(), &v[0]) {
                    ("len", Json::Array(a)) => json!(a.len()),
                    ("len", Json::String(s)) => json!(s.chars().count()),
                    ("len", Json::Object(m)) => json!(m.len()),
                    ("lower", Json::String(s)) => Json::String(s.to_lowercase()),
                    ("abs", x) => json!(num(x, "abs")?.abs()),
                    ("last", Json::Array(a)) => a.last().cloned().unwrap_or(Json::Null),
                    ("take", Json::Array(a)) => {
                        let n = num(&v[1], "take")?.max(0.0) as usize;
                        Json::Array(a.iter().take(n).cloned().collect())
                    }
                    (f, x) => return Err(OracleError::Type(format!("{f} cannot take {x}"))),
                }
            }
        })
    }
}
