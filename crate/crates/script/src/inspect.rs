//! Console-style rendering of values, close to Node's `util.inspect`.

use crate::interp::{Interp, R};
use crate::number::format_number;
use crate::value::{Func, Key, ObjId, ObjKind, PState, Value};

const MAX_DEPTH: usize = 2;
const MAX_ITEMS: usize = 100;

/// Renders `v`. At the top level strings are printed without quotes.
pub(crate) fn inspect(it: &mut Interp, v: &Value, top: bool) -> R<String> {
    let mut seen = Vec::new();
    render(it, v, top, 0, &mut seen)
}

/// `console.log` argument formatting including `%s`-style substitutions.
pub(crate) fn format_args(it: &mut Interp, args: &[Value]) -> R<String> {
    let mut parts = Vec::new();
    let mut rest = args;
    if let Some(Value::Str(fmt)) = args.first() {
        if fmt.contains('%') && args.len() > 1 {
            let mut out = String::new();
            let mut idx = 1;
            let mut chars = fmt.chars().peekable();
            while let Some(c) = chars.next() {
                if c != '%' {
                    out.push(c);
                    continue;
                }
                match chars.peek().copied() {
                    Some('%') => {
                        chars.next();
                        out.push('%');
                    }
                    Some(spec @ ('s' | 'd' | 'i' | 'f' | 'o' | 'O' | 'j')) if idx < args.len() => {
                        chars.next();
                        let a = &args[idx];
                        idx += 1;
                        let s = match spec {
                            's' => match a {
                                Value::Str(s) => s.to_string(),
                                _ => inspect(it, a, false)?,
                            },
                            'd' | 'i' => {
                                let n = it.to_number(a)?;
                                format_number(if spec == 'i' { n.trunc() } else { n })
                            }
                            'f' => format_number(it.to_number(a)?),
                            'j' => {
                                let j = it.to_json(a)?;
                                j.to_string()
                            }
                            _ => inspect(it, a, false)?,
                        };
                        out.push_str(&s);
                    }
                    _ => out.push('%'),
                }
            }
            parts.push(out);
            rest = &args[idx.min(args.len())..];
        }
    }
    if parts.is_empty() {
        for a in args {
            parts.push(inspect(it, a, true)?);
        }
    } else {
        for a in rest {
            parts.push(inspect(it, a, true)?);
        }
    }
    Ok(parts.join(" "))
}

fn quote(s: &str) -> String {
    let q = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(q);
    for c in s.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            c if c == q => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(q);
    out
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) if c.is_alphabetic() || c == '_' || c == '$' => {}
        _ => return false,
    }
    cs.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

fn render(it: &mut Interp, v: &Value, top: bool, depth: usize, seen: &mut Vec<ObjId>) -> R<String> {
    let id = match v {
        Value::Undefined => return Ok("undefined".into()),
        Value::Null => return Ok("null".into()),
        Value::Bool(b) => return Ok(b.to_string()),
        Value::Num(n) => {
            return Ok(if *n == 0.0 && n.is_sign_negative() {
                "-0".into()
            } else {
                format_number(*n)
            })
        }
        Value::Str(s) => return Ok(if top { s.to_string() } else { quote(s) }),
        Value::Obj(id) => *id,
    };
    if seen.contains(&id) {
        return Ok("[Circular]".into());
    }
    enum Shape {
        Func(String),
        Error,
        Array(Vec<Value>),
        Promise(PState),
        Host(String),
        Map(Vec<(Value, Value)>),
        Set(Vec<Value>),
        Plain,
    }
    let shape = match &it.obj(id).kind {
        ObjKind::Function(f) => Shape::Func(match f {
            Func::Closure { def, .. } => def.name.clone().unwrap_or_default(),
            Func::Native { name, .. } => name.to_string(),
            Func::Host { path, .. } => path.rsplit('.').next().unwrap_or_default().to_string(),
            _ => String::new(),
        }),
        ObjKind::Error { .. } => Shape::Error,
        ObjKind::Array { items, .. } => Shape::Array(items.clone()),
        ObjKind::Promise(p) => Shape::Promise(p.state.clone()),
        ObjKind::HostNs(path) => Shape::Host(path.clone()),
        ObjKind::Map(m) => Shape::Map(m.clone()),
        ObjKind::Set(s) => Shape::Set(s.clone()),
        ObjKind::Ordinary => Shape::Plain,
    };
    match shape {
        Shape::Func(name) => {
            let own = it.obj(id).props.get("name").cloned();
            let name = match own {
                Some(Value::Str(s)) => s.to_string(),
                _ => name,
            };
            Ok(if name.is_empty() {
                "[Function (anonymous)]".into()
            } else {
                format!("[Function: {name}]")
            })
        }
        Shape::Error => {
            let t = it.flatten_thrown(v);
            let s = t.to_string();
            Ok(if top { s } else { format!("[{s}]") })
        }
        Shape::Host(path) => Ok(format!("[{path}]")),
        Shape::Promise(state) => {
            seen.push(id);
            let inner = match state {
                PState::Pending => "<pending>".to_string(),
                PState::Fulfilled(x) => render(it, &x, false, depth + 1, seen)?,
                PState::Rejected(x) => format!("<rejected> {}", render(it, &x, false, depth + 1, seen)?),
            };
            seen.pop();
            Ok(format!("Promise {{ {inner} }}"))
        }
        Shape::Array(items) => {
            if items.is_empty() {
                return Ok("[]".into());
            }
            if depth > MAX_DEPTH {
                return Ok("[Array]".into());
            }
            seen.push(id);
            let mut parts = Vec::new();
            for x in items.iter().take(MAX_ITEMS) {
                parts.push(render(it, x, false, depth + 1, seen)?);
            }
            if items.len() > MAX_ITEMS {
                parts.push(format!("... {} more items", items.len() - MAX_ITEMS));
            }
            seen.pop();
            Ok(format!("[ {} ]", parts.join(", ")))
        }
        Shape::Map(entries) => {
            if depth > MAX_DEPTH {
                return Ok("[Map]".into());
            }
            seen.push(id);
            let mut parts = Vec::new();
            for (k, x) in &entries {
                let ks = render(it, k, false, depth + 1, seen)?;
                let vs = render(it, x, false, depth + 1, seen)?;
                parts.push(format!("{ks} => {vs}"));
            }
            seen.pop();
            Ok(if parts.is_empty() {
                format!("Map({}) {{}}", entries.len())
            } else {
                format!("Map({}) {{ {} }}", entries.len(), parts.join(", "))
            })
        }
        Shape::Set(items) => {
            if depth > MAX_DEPTH {
                return Ok("[Set]".into());
            }
            seen.push(id);
            let mut parts = Vec::new();
            for x in &items {
                parts.push(render(it, x, false, depth + 1, seen)?);
            }
            seen.pop();
            Ok(if parts.is_empty() {
                format!("Set({}) {{}}", items.len())
            } else {
                format!("Set({}) {{ {} }}", items.len(), parts.join(", "))
            })
        }
        Shape::Plain => {
            let keys: Vec<_> = it.obj(id).props.keys().cloned().collect();
            if keys.is_empty() {
                return Ok("{}".into());
            }
            if depth > MAX_DEPTH {
                return Ok("[Object]".into());
            }
            seen.push(id);
            let mut parts = Vec::new();
            for k in keys.iter().take(MAX_ITEMS) {
                let x = it.get(v, &Key::from_rc(k.clone()))?;
                let ks = if is_ident(k) { k.to_string() } else { quote(k) };
                parts.push(format!("{ks}: {}", render(it, &x, false, depth + 1, seen)?));
            }
            seen.pop();
            Ok(format!("{{ {} }}", parts.join(", ")))
        }
    }
}
