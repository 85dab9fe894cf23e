//! Snapshots, the audit trail, and persisted sessions.
//!
//! On disk everything lives in one data directory:
//!
//! ```text
//! audit.log              one JSON AuditEntry per line, append-only
//! snapshots/snap-<id>    one JSON Snapshot per file
//! sessions/<id>.json     latest session record
//! sessions/<id>.events   one JSON event per line
//! host.json              the live host state
//! ```
//!
//! Writes are serialized through one mutex, so readers always observe a
//! consistent prefix of the log.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::host::{diff, HostState, StateDiff};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage error: {0}")]
    Storage(String),
    #[error("unknown snapshot {0}")]
    UnknownSnapshot(u64),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> Self {
        StoreError::Storage(e.to_string())
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: u64,
    pub state: HostState,
    pub created_at_ms: u64,
    pub session_id: String,
    pub iteration_index: u32,
}

/// One line of the audit log. Fields serialize in this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub session_id: String,
    pub iteration_index: u32,
    pub code_hash: Option<String>,
    pub verdict_decision: Option<String>,
    pub result_status: String,
    pub snapshot_id: u64,
    pub state_diff: StateDiff,
}

/// An audit entry before the store assigns `seq` and `timestamp_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub session_id: String,
    pub iteration_index: u32,
    pub code_hash: Option<String>,
    pub verdict_decision: Option<String>,
    pub result_status: String,
    pub snapshot_id: u64,
    pub state_diff: StateDiff,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditFilter {
    pub session_id: Option<String>,
    /// Half-open `seq` range.
    pub seq_from: Option<u64>,
    pub seq_to: Option<u64>,
}

impl AuditFilter {
    pub fn session(id: impl Into<String>) -> AuditFilter {
        AuditFilter { session_id: Some(id.into()), ..Default::default() }
    }

    fn accepts(&self, e: &AuditEntry) -> bool {
        self.session_id.as_ref().is_none_or(|s| *s == e.session_id)
            && self.seq_from.is_none_or(|f| e.seq >= f)
            && self.seq_to.is_none_or(|t| e.seq < t)
    }
}

#[derive(Debug)]
struct Inner {
    dir: Option<PathBuf>,
    audit: Vec<AuditEntry>,
    next_seq: u64,
    next_snapshot: u64,
    /// All snapshots for the memory backend; none for the directory one.
    snapshots: BTreeMap<u64, Snapshot>,
    sessions: BTreeMap<String, Json>,
    events: BTreeMap<String, Vec<Json>>,
    host: Option<HostState>,
}

#[derive(Debug)]
pub struct Store {
    inner: Mutex<Inner>,
}

/// Reads NDJSON, ignoring a torn final line left by a crash mid-append.
fn read_ndjson<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(f).lines().collect::<Result<_, _>>()?;
    let n = lines.len();
    let mut out = Vec::with_capacity(n);
    for (i, l) in lines.iter().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(l) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == n => break,
            Err(e) => return Err(StoreError::Storage(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn append_line(path: &Path, v: &impl Serialize) -> Result<(), StoreError> {
    let mut line = serde_json::to_string(v)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    Ok(())
}

/// Write-then-rename, so readers never see a half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn snapshot_path(dir: &Path, id: u64) -> PathBuf {
    dir.join("snapshots").join(format!("snap-{id}"))
}

fn snapshot_ids(dir: &Path) -> Result<Vec<u64>, StoreError> {
    let mut ids = Vec::new();
    for e in fs::read_dir(dir.join("snapshots"))? {
        let name = e?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_prefix("snap-")).and_then(|n| n.parse().ok()) {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

impl Store {
    pub fn in_memory() -> Store {
        Store {
            inner: Mutex::new(Inner {
                dir: None,
                audit: Vec::new(),
                next_seq: 1,
                next_snapshot: 1,
                snapshots: BTreeMap::new(),
                sessions: BTreeMap::new(),
                events: BTreeMap::new(),
                host: None,
            }),
        }
    }

    /// Opens (creating if needed) a data directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Store, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("snapshots"))?;
        fs::create_dir_all(dir.join("sessions"))?;
        let audit: Vec<AuditEntry> = read_ndjson(&dir.join("audit.log"))?;
        let next_seq = audit.last().map_or(1, |e| e.seq + 1);
        let next_snapshot = snapshot_ids(&dir)?
            .last()
            .copied()
            .max(audit.iter().map(|e| e.snapshot_id).max())
            .map_or(1, |m| m + 1);
        let mut sessions = BTreeMap::new();
        let mut events = BTreeMap::new();
        for e in fs::read_dir(dir.join("sessions"))? {
            let p = e?.path();
            let Some(stem) = p.file_stem().and_then(|s| s.to_str()).map(String::from) else { continue };
            match p.extension().and_then(|x| x.to_str()) {
                Some("json") => {
                    sessions.insert(stem, serde_json::from_slice(&fs::read(&p)?)?);
                }
                Some("events") => {
                    events.insert(stem, read_ndjson(&p)?);
                }
                _ => {}
            }
        }
        let host = match fs::read(dir.join("host.json")) {
            Ok(b) => Some(HostState::from_json(&serde_json::from_slice(&b)?).map_err(|e| StoreError::Storage(e.to_string()))?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Store {
            inner: Mutex::new(Inner {
                dir: Some(dir),
                audit,
                next_seq,
                next_snapshot,
                snapshots: BTreeMap::new(),
                sessions,
                events,
                host,
            }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn data_dir(&self) -> Option<PathBuf> {
        self.lock().dir.clone()
    }

    pub fn take_snapshot(&self, state: &HostState, session_id: &str, iteration_index: u32) -> Result<u64, StoreError> {
        state.validate().map_err(|e| StoreError::Storage(format!("refusing to snapshot invalid state: {e}")))?;
        let mut g = self.lock();
        let id = g.next_snapshot;
        let snap = Snapshot {
            id,
            state: state.clone(),
            created_at_ms: now_ms(),
            session_id: session_id.to_string(),
            iteration_index,
        };
        match &g.dir {
            Some(dir) => write_atomic(&snapshot_path(dir, id), &serde_json::to_vec(&snap)?)?,
            None => {
                g.snapshots.insert(id, snap);
            }
        }
        g.next_snapshot = id + 1;
        Ok(id)
    }

    pub fn snapshot(&self, id: u64) -> Result<Snapshot, StoreError> {
        let g = self.lock();
        match &g.dir {
            None => g.snapshots.get(&id).cloned().ok_or(StoreError::UnknownSnapshot(id)),
            Some(dir) => {
                let bytes = match fs::read(snapshot_path(dir, id)) {
                    Ok(b) => b,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::UnknownSnapshot(id)),
                    Err(e) => return Err(e.into()),
                };
                let snap: Snapshot = serde_json::from_slice(&bytes)?;
                snap.state.validate().map_err(|e| StoreError::Storage(format!("snapshot {id}: {e}")))?;
                Ok(snap)
            }
        }
    }

    pub fn snapshot_ids(&self) -> Result<Vec<u64>, StoreError> {
        let g = self.lock();
        match &g.dir {
            None => Ok(g.snapshots.keys().copied().collect()),
            Some(dir) => snapshot_ids(dir),
        }
    }

    /// Restores a snapshot, logging a `rolled_back` entry whose diff goes
    /// from `current` to the restored state. The audit log itself is never
    /// rewound.
    pub fn rollback(&self, snapshot_id: u64, current: &HostState) -> Result<HostState, StoreError> {
        let snap = self.snapshot(snapshot_id)?;
        self.append_audit(AuditRecord {
            session_id: snap.session_id.clone(),
            iteration_index: snap.iteration_index,
            code_hash: None,
            verdict_decision: None,
            result_status: "rolled_back".into(),
            snapshot_id,
            state_diff: diff(current, &snap.state),
        })?;
        Ok(snap.state)
    }

    pub fn append_audit(&self, rec: AuditRecord) -> Result<AuditEntry, StoreError> {
        let mut g = self.lock();
        let entry = AuditEntry {
            seq: g.next_seq,
            timestamp_ms: now_ms(),
            session_id: rec.session_id,
            iteration_index: rec.iteration_index,
            code_hash: rec.code_hash,
            verdict_decision: rec.verdict_decision,
            result_status: rec.result_status,
            snapshot_id: rec.snapshot_id,
            state_diff: rec.state_diff,
        };
        if let Some(dir) = &g.dir {
            append_line(&dir.join("audit.log"), &entry)?;
        }
        g.next_seq += 1;
        g.audit.push(entry.clone());
        Ok(entry)
    }

    /// Entries matching `filter`, in `seq` order.
    pub fn query_audit(&self, filter: &AuditFilter) -> Vec<AuditEntry> {
        self.lock().audit.iter().filter(|e| filter.accepts(e)).cloned().collect()
    }

    /// Deletes all but the newest `keep_last` snapshots. Audit entries keep
    /// their ids; restoring a collected snapshot reports it unknown.
    pub fn gc(&self, keep_last: usize) -> Result<usize, StoreError> {
        let ids = self.snapshot_ids()?;
        let doomed = &ids[..ids.len().saturating_sub(keep_last)];
        let mut g = self.lock();
        for id in doomed {
            match &g.dir {
                Some(dir) => fs::remove_file(snapshot_path(dir, *id))?,
                None => {
                    g.snapshots.remove(id);
                }
            }
        }
        Ok(doomed.len())
    }

    pub fn save_host(&self, state: &HostState) -> Result<(), StoreError> {
        let mut g = self.lock();
        if let Some(dir) = &g.dir {
            let mut bytes = serde_json::to_vec_pretty(state)?;
            bytes.push(b'\n');
            write_atomic(&dir.join("host.json"), &bytes)?;
        }
        g.host = Some(state.clone());
        Ok(())
    }

    pub fn load_host(&self) -> Option<HostState> {
        self.lock().host.clone()
    }

    pub fn save_session(&self, id: &str, record: &Json) -> Result<(), StoreError> {
        let mut g = self.lock();
        if let Some(dir) = &g.dir {
            write_atomic(&dir.join("sessions").join(format!("{id}.json")), &serde_json::to_vec(record)?)?;
        }
        g.sessions.insert(id.to_string(), record.clone());
        Ok(())
    }

    pub fn sessions(&self) -> BTreeMap<String, Json> {
        self.lock().sessions.clone()
    }

    pub fn append_event(&self, id: &str, event: &Json) -> Result<(), StoreError> {
        let mut g = self.lock();
        if let Some(dir) = &g.dir {
            append_line(&dir.join("sessions").join(format!("{id}.events")), event)?;
        }
        g.events.entry(id.to_string()).or_default().push(event.clone());
        Ok(())
    }

    pub fn events(&self, id: &str) -> Vec<Json> {
        self.lock().events.get(id).cloned().unwrap_or_default()
    }
}
