use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{HostState, InvariantViolation};

/// One changed leaf or subtree. `before`/`after` are absent when the path did
/// not exist on that side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub before: Option<Json>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub after: Option<Json>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDiff {
    pub entries: Vec<DiffEntry>,
}

impl StateDiff {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.path.as_str())
    }

    /// Swaps every entry's before and after.
    pub fn inverted(&self) -> StateDiff {
        StateDiff {
            entries: self
                .entries
                .iter()
                .map(|e| DiffEntry {
                    path: e.path.clone(),
                    before: e.after.clone(),
                    after: e.before.clone(),
                })
                .collect(),
        }
    }
}

/// Structural diff between two states, keyed by slash-separated paths such
/// as `player/volume` or `documents/doc-1/paragraphs/2`.
pub fn diff(before: &HostState, after: &HostState) -> StateDiff {
    diff_json(&before.to_json(), &after.to_json())
}

fn diff_json(before: &Json, after: &Json) -> StateDiff {
    let mut out = Vec::new();
    walk(before, after, "", &mut out);
    StateDiff { entries: out }
}

fn escape(seg: &str) -> String {
    seg.replace('~', "~0").replace('/', "~1")
}

fn unescape(seg: &str) -> String {
    seg.replace("~1", "/").replace("~0", "~")
}

fn join(base: &str, seg: &str) -> String {
    if base.is_empty() {
        escape(seg)
    } else {
        format!("{base}/{}", escape(seg))
    }
}

fn walk(a: &Json, b: &Json, path: &str, out: &mut Vec<DiffEntry>) {
    match (a, b) {
        (Json::Object(x), Json::Object(y)) => {
            for (k, va) in x {
                let p = join(path, k);
                match y.get(k) {
                    Some(vb) => walk(va, vb, &p, out),
                    None => out.push(DiffEntry { path: p, before: Some(va.clone()), after: None }),
                }
            }
            for (k, vb) in y {
                if !x.contains_key(k) {
                    out.push(DiffEntry {
                        path: join(path, k),
                        before: None,
                        after: Some(vb.clone()),
                    });
                }
            }
        }
        (Json::Array(x), Json::Array(y)) => {
            for i in 0..x.len().max(y.len()) {
                let p = join(path, &i.to_string());
                match (x.get(i), y.get(i)) {
                    (Some(va), Some(vb)) => walk(va, vb, &p, out),
                    (va, vb) => out.push(DiffEntry {
                        path: p,
                        before: va.cloned(),
                        after: vb.cloned(),
                    }),
                }
            }
        }
        _ if a == b => {}
        _ => out.push(DiffEntry {
            path: path.to_string(),
            before: Some(a.clone()),
            after: Some(b.clone()),
        }),
    }
}

/// Writes each entry's `after` value (or removes the path) onto `state`.
pub fn apply_diff(state: &HostState, d: &StateDiff) -> Result<HostState, InvariantViolation> {
    let mut doc = state.to_json();
    apply_json(&mut doc, d).map_err(InvariantViolation)?;
    HostState::from_json(&doc)
}

pub(crate) fn apply_json(doc: &mut Json, d: &StateDiff) -> Result<(), String> {
    let mut removals = Vec::new();
    for e in &d.entries {
        let segs: Vec<String> = if e.path.is_empty() {
            Vec::new()
        } else {
            e.path.split('/').map(unescape).collect()
        };
        match &e.after {
            Some(v) => set_at(doc, &segs, v.clone())?,
            None => removals.push(segs),
        }
    }
    // Later array indices first so earlier removals do not shift them.
    removals.sort_by(|a, b| {
        let key = |s: &Vec<String>| {
            let last = s.last().and_then(|l| l.parse::<usize>().ok());
            (s[..s.len().saturating_sub(1)].to_vec(), last)
        };
        key(b).cmp(&key(a))
    });
    for segs in removals {
        remove_at(doc, &segs)?;
    }
    Ok(())
}

fn set_at(doc: &mut Json, segs: &[String], v: Json) -> Result<(), String> {
    let Some((last, parents)) = segs.split_last() else {
        *doc = v;
        return Ok(());
    };
    let parent = descend(doc, parents)?;
    match parent {
        Json::Object(m) => {
            m.insert(last.clone(), v);
        }
        Json::Array(a) => {
            let i: usize = last.parse().map_err(|_| format!("bad index {last}"))?;
            match i.cmp(&a.len()) {
                std::cmp::Ordering::Less => a[i] = v,
                std::cmp::Ordering::Equal => a.push(v),
                std::cmp::Ordering::Greater => return Err(format!("index {i} past end")),
            }
        }
        _ => return Err(format!("cannot set {last} on a scalar")),
    }
    Ok(())
}

fn remove_at(doc: &mut Json, segs: &[String]) -> Result<(), String> {
    let Some((last, parents)) = segs.split_last() else {
        return Err("cannot remove the root".into());
    };
    match descend(doc, parents)? {
        Json::Object(m) => {
            m.shift_remove(last);
        }
        Json::Array(a) => {
            let i: usize = last.parse().map_err(|_| format!("bad index {last}"))?;
            if i >= a.len() {
                return Err(format!("index {i} past end"));
            }
            a.remove(i);
        }
        _ => return Err(format!("cannot remove {last} from a scalar")),
    }
    Ok(())
}

fn descend<'a>(mut doc: &'a mut Json, segs: &[String]) -> Result<&'a mut Json, String> {
    for s in segs {
        doc = match doc {
            Json::Object(m) => m.get_mut(s).ok_or_else(|| format!("missing key {s}"))?,
            Json::Array(a) => {
                let i: usize = s.parse().map_err(|_| format!("bad index {s}"))?;
                a.get_mut(i).ok_or_else(|| format!("missing index {i}"))?
            }
            _ => return Err(format!("cannot descend into scalar at {s}")),
        };
    }
    Ok(doc)
}
