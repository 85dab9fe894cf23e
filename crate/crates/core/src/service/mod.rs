//! HTTP front end: sessions and their event streams, approvals, feedback,
//! rollback, state and audit queries, and an opt-in raw execution port.
//! Static files for the operator UI are served under `/ui`.

mod worker;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};
use tower_http::services::ServeDir;

use crate::agent::{
    new_session_id, recover_interrupted, Agent, AgentConfig, AgentError, EventKind, Feedback, Session, SessionEvent,
    SessionStatus,
};
use crate::host::{init_fixture, HostState};
use crate::llm::Provider;
use crate::safety::{analyze, Decision, Guard, RuleSet, Verdict};
use crate::sandbox::{execute, ActionCode, ErrorKind, ErrorReport, ExecStatus, ExecutionResult};
use crate::store::{AuditFilter, AuditRecord, Store, StoreError};

use worker::{Command, Worker};

pub const DEFAULT_PORT: u16 = 8787;
/// Fixture label of sessions that act on the shared live host.
pub const LIVE: &str = "live";
/// Session id under which raw executions are audited.
pub const RAW_SESSION: &str = "raw";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    /// Never changes host state.
    ReadOnly,
    /// Changes state only through agent iterations (analyze, guard, audit).
    Agent,
    /// Runs code through analyze, guard and audit directly.
    Raw,
    /// Restores a snapshot; the store audits it.
    Rollback,
}

/// Every HTTP route with the way it may affect host state.
pub const ENDPOINTS: [(&str, &str, Effect); 11] = [
    ("POST", "/sessions", Effect::Agent),
    ("GET", "/sessions", Effect::ReadOnly),
    ("GET", "/sessions/{id}", Effect::ReadOnly),
    ("GET", "/sessions/{id}/events", Effect::ReadOnly),
    ("POST", "/sessions/{id}/approve", Effect::Agent),
    ("POST", "/sessions/{id}/feedback", Effect::Agent),
    ("POST", "/sessions/{id}/rollback", Effect::Rollback),
    ("GET", "/state", Effect::ReadOnly),
    ("GET", "/audit", Effect::ReadOnly),
    ("POST", "/execute", Effect::Raw),
    ("GET", "/ui", Effect::ReadOnly),
];

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub port: u16,
    /// Persistent data directory; in-memory when absent.
    pub data_dir: Option<PathBuf>,
    pub allow_raw_exec: bool,
    pub ui_dir: PathBuf,
    /// Initial live host when the data directory holds none.
    pub fixture: String,
    pub agent: AgentConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: DEFAULT_PORT,
            data_dir: None,
            allow_raw_exec: false,
            ui_dir: PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/ui")),
            fixture: "default".into(),
            agent: AgentConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

struct Handle {
    host: Arc<Mutex<HostState>>,
    tx: mpsc::Sender<Command>,
}

pub struct ServiceState {
    cfg: ServiceConfig,
    provider: Arc<dyn Provider>,
    store: Arc<Store>,
    live: Arc<Mutex<HostState>>,
    /// Holder of the live host: a session id or the raw port.
    live_owner: Mutex<Option<String>>,
    handles: Mutex<HashMap<String, Handle>>,
    events: broadcast::Sender<SessionEvent>,
    /// Sessions failed at startup because the previous process stopped.
    pub recovered: Vec<String>,
}

impl ServiceState {
    /// Opens the store, fails sessions left unfinished by a previous run,
    /// and loads (or initializes) the live host.
    pub fn new(cfg: ServiceConfig, provider: Arc<dyn Provider>) -> Result<Arc<ServiceState>, ServiceError> {
        let store = Arc::new(match &cfg.data_dir {
            Some(d) => Store::open(d)?,
            None => Store::in_memory(),
        });
        let recovered = recover_interrupted(&store)?;
        let host = match store.load_host() {
            Some(h) => h,
            None => {
                let h = init_fixture(&cfg.fixture).map_err(|e| ServiceError::Fixture(e.to_string()))?;
                store.save_host(&h)?;
                h
            }
        };
        let (events, _) = broadcast::channel(1024);
        Ok(Arc::new(ServiceState {
            cfg,
            provider,
            store,
            live: Arc::new(Mutex::new(host)),
            live_owner: Mutex::new(None),
            handles: Mutex::new(HashMap::new()),
            events,
            recovered,
        }))
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn live_state(&self) -> HostState {
        self.live.lock().unwrap().clone()
    }

    fn agent(&self, cfg: AgentConfig) -> Agent {
        let tx = self.events.clone();
        Agent::new(cfg, self.provider.clone(), self.store.clone()).with_events(Arc::new(move |e| {
            let _ = tx.send(e.clone());
        }))
    }

    fn session(&self, id: &str) -> Option<Session> {
        serde_json::from_value(self.store.sessions().get(id)?.clone()).ok()
    }

    pub(crate) fn release_live(&self, owner: &str) {
        let mut o = self.live_owner.lock().unwrap();
        if o.as_deref() == Some(owner) {
            *o = None;
        }
    }

    fn claim_live(&self, owner: &str) -> Result<(), ApiError> {
        let mut o = self.live_owner.lock().unwrap();
        match o.as_deref() {
            Some(other) => Err(ApiError(StatusCode::CONFLICT, format!("the live host is in use by {other}"))),
            None => {
                *o = Some(owner.to_string());
                Ok(())
            }
        }
    }
}

pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let code = match &e {
            AgentError::WrongState { .. } => StatusCode::CONFLICT,
            AgentError::Store(StoreError::UnknownSnapshot(_)) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        AgentError::from(e).into()
    }
}

type ApiResult = Result<Response, ApiError>;

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown session '{id}'"))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let ui = ServeDir::new(&state.cfg.ui_dir).append_index_html_on_directories(true);
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", get(stream_events))
        .route("/sessions/{id}/approve", post(approve))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/rollback", post(rollback))
        .route("/state", get(get_state))
        .route("/audit", get(get_audit))
        .route("/execute", post(execute_raw))
        .nest_service("/ui", ui)
        .with_state(state)
}

/// Binds `addr` and serves until the future is dropped.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(state, tokio::net::TcpListener::bind(addr).await?).await
}

pub async fn serve_on(state: Arc<ServiceState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    instruction: String,
    /// Run on a private copy of this fixture instead of the live host.
    fixture: Option<String>,
    max_iterations: Option<u32>,
    /// `default` or `read-only`.
    rules: Option<String>,
}

async fn create_session(State(st): State<Arc<ServiceState>>, Json(body): Json<CreateSession>) -> ApiResult {
    let bad = |m: &str| Err(ApiError(StatusCode::BAD_REQUEST, m.to_string()));
    if body.instruction.trim().is_empty() {
        return bad("instruction must not be empty");
    }
    let mut cfg = st.cfg.agent.clone();
    match body.max_iterations {
        Some(0) => return bad("max_iterations must be at least 1"),
        Some(n) => cfg.max_iterations = n,
        None => {}
    }
    match body.rules.as_deref() {
        None | Some("default") => {}
        Some("read-only") => cfg.rules = Arc::new(RuleSet::verification()),
        Some(other) => return bad(&format!("unknown rules profile '{other}'")),
    }
    let id = new_session_id();
    let (host, label) = match &body.fixture {
        None => {
            st.claim_live(&id)?;
            (st.live.clone(), LIVE.to_string())
        }
        Some(f) => match init_fixture(f) {
            Ok(h) => (Arc::new(Mutex::new(h)), f.clone()),
            Err(e) => return bad(&e.to_string()),
        },
    };
    let agent = st.agent(cfg);
    let initial = host.lock().unwrap().clone();
    let session = match agent.start_with_id(id.clone(), &body.instruction, &label, &initial) {
        Ok(s) => s,
        Err(e) => {
            st.release_live(&id);
            return Err(e.into());
        }
    };
    let (tx, rx) = mpsc::channel();
    st.handles.lock().unwrap().insert(id.clone(), Handle { host: host.clone(), tx });
    Worker { st: st.clone(), agent, host, live: body.fixture.is_none(), rx }.spawn(session);
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "status": "running" }))).into_response())
}

async fn list_sessions(State(st): State<Arc<ServiceState>>) -> ApiResult {
    let list: Vec<Value> = st
        .store
        .sessions()
        .values()
        .map(|s| {
            json!({
                "id": s["id"], "instruction": s["instruction"], "status": s["status"],
                "iterations": s["iterations"].as_array().map(Vec::len).unwrap_or(0),
                "created_at_ms": s["created_at_ms"],
            })
        })
        .collect();
    Ok(Json(list).into_response())
}

async fn get_session(State(st): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult {
    let s = st.store.sessions().get(&id).cloned().ok_or_else(|| not_found(&id))?;
    Ok(Json(s).into_response())
}

fn ends_stream(ev: &SessionEvent) -> bool {
    ev.kind == EventKind::StatusChanged
        && serde_json::from_value::<SessionStatus>(ev.payload["to"].clone()).is_ok_and(|s| s.is_terminal())
}

/// Replays stored events, then tails live ones; ends after a terminal
/// status change.
async fn stream_events(State(st): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult {
    let session = st.session(&id).ok_or_else(|| not_found(&id))?;
    let mut live = st.events.subscribe();
    let (tx, rx) = futures::channel::mpsc::unbounded::<SessionEvent>();
    let store = st.store.clone();
    tokio::spawn(async move {
        let mut next = 0u64;
        let mut done = false;
        let catch_up = |next: &mut u64, done: &mut bool| {
            for v in store.events(&id) {
                let Ok(ev) = serde_json::from_value::<SessionEvent>(v) else { continue };
                if ev.seq < *next {
                    continue;
                }
                *next = ev.seq + 1;
                *done |= ends_stream(&ev);
                if tx.unbounded_send(ev).is_err() {
                    *done = true;
                }
            }
        };
        catch_up(&mut next, &mut done);
        if session.status.is_terminal() {
            return;
        }
        while !done {
            match live.recv().await {
                Ok(ev) if ev.session_id == id && ev.seq == next => {
                    next += 1;
                    done = ends_stream(&ev);
                    done |= tx.unbounded_send(ev).is_err();
                }
                Ok(ev) if ev.session_id == id && ev.seq > next => catch_up(&mut next, &mut done),
                Ok(_) => {}
                Err(broadcast::error::RecvError::Lagged(_)) => catch_up(&mut next, &mut done),
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });
    let stream = rx.map(|ev| {
        let kind = serde_json::to_value(ev.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        Ok::<_, Infallible>(Event::default().event(kind).id(ev.seq.to_string()).json_data(&ev).expect("event serializes"))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

async fn send_command(
    st: &Arc<ServiceState>,
    id: &str,
    make: impl FnOnce(oneshot::Sender<Result<Session, AgentError>>) -> Command,
) -> ApiResult {
    let (reply, rx) = oneshot::channel();
    let sent = st.handles.lock().unwrap().get(id).map(|h| h.tx.send(make(reply)).is_ok()).unwrap_or(false);
    if !sent {
        let status = st.session(id).map(|s| s.status).ok_or_else(|| not_found(id))?;
        return Err(ApiError(StatusCode::CONFLICT, format!("session is {status}")));
    }
    let s = rx.await.map_err(|_| ApiError(StatusCode::CONFLICT, "session ended".into()))??;
    Ok(Json(s.to_json()).into_response())
}

fn require_status(st: &ServiceState, id: &str, want: SessionStatus) -> Result<(), ApiError> {
    let s = st.session(id).ok_or_else(|| not_found(id))?;
    if s.status != want {
        return Err(ApiError(StatusCode::CONFLICT, format!("session is {}, expected {want}", s.status)));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Approve {
    grant: bool,
}

async fn approve(State(st): State<Arc<ServiceState>>, Path(id): Path<String>, Json(b): Json<Approve>) -> ApiResult {
    require_status(&st, &id, SessionStatus::AwaitingApproval)?;
    send_command(&st, &id, |r| Command::Feedback(Feedback::Approval { grant: b.grant }, r)).await
}

#[derive(Debug, Deserialize)]
struct UserFeedback {
    #[serde(default)]
    text: String,
    accomplished: bool,
}

async fn feedback(State(st): State<Arc<ServiceState>>, Path(id): Path<String>, Json(b): Json<UserFeedback>) -> ApiResult {
    require_status(&st, &id, SessionStatus::AwaitingUser)?;
    send_command(&st, &id, |r| Command::Feedback(Feedback::User { text: b.text, accomplished: b.accomplished }, r)).await
}

#[derive(Debug, Default, Deserialize)]
struct Rollback {
    snapshot_id: Option<u64>,
}

async fn rollback(State(st): State<Arc<ServiceState>>, Path(id): Path<String>, body: Option<Json<Rollback>>) -> ApiResult {
    let snap = body.map(|b| b.0.snapshot_id).unwrap_or_default();
    let mut s = st.session(&id).ok_or_else(|| not_found(&id))?;
    if s.status == SessionStatus::Running {
        return Err(ApiError(StatusCode::CONFLICT, "session is running".into()));
    }
    if s.status.is_paused() {
        return send_command(&st, &id, |r| Command::Rollback(snap, r)).await;
    }
    let host = match st.handles.lock().unwrap().get(&id) {
        Some(h) => h.host.clone(),
        None if s.fixture == LIVE => st.live.clone(),
        None => return Err(ApiError(StatusCode::CONFLICT, "the session's host instance is gone".into())),
    };
    let live = Arc::ptr_eq(&host, &st.live);
    if live {
        st.claim_live(&id)?;
    }
    let st2 = st.clone();
    let out = tokio::task::spawn_blocking(move || {
        let agent = st2.agent(st2.cfg.agent.clone());
        let mut h = host.lock().unwrap();
        let mut next = h.clone();
        agent.rollback_session(&mut s, &mut next, snap)?;
        *h = next;
        if live {
            st2.store.save_host(&h)?;
        }
        Ok::<_, AgentError>(s)
    })
    .await
    .expect("rollback task");
    if live {
        st.release_live(&id);
    }
    Ok(Json(out?.to_json()).into_response())
}

async fn get_state(State(st): State<Arc<ServiceState>>) -> ApiResult {
    let h = st.live_state();
    Ok(Json(json!({ "hash": h.hash(), "state": h })).into_response())
}

#[derive(Debug, Deserialize)]
struct AuditQuery {
    session: Option<String>,
    from: Option<u64>,
    to: Option<u64>,
}

async fn get_audit(State(st): State<Arc<ServiceState>>, Query(q): Query<AuditQuery>) -> ApiResult {
    let f = AuditFilter { session_id: q.session, seq_from: q.from, seq_to: q.to };
    Ok(Json(st.store.query_audit(&f)).into_response())
}

#[derive(Debug, Deserialize)]
struct Execute {
    code: String,
}

fn denied_result(v: &Verdict) -> ExecutionResult {
    let summary = v.summary();
    ExecutionResult {
        status: ExecStatus::Denied,
        return_value: None,
        console: Vec::new(),
        error: Some(ErrorReport {
            kind: ErrorKind::GuardDenied,
            message: summary.clone(),
            text: summary,
            location: v.reasons.first().map(|r| r.location()),
        }),
        state_diff: Default::default(),
        duration_ms: 0,
    }
}

/// Runs code on the live host through the same checks as agent code. Code
/// needing approval is refused: this port has no one to ask.
async fn execute_raw(State(st): State<Arc<ServiceState>>, Json(b): Json<Execute>) -> ApiResult {
    if !st.cfg.allow_raw_exec {
        return Err(ApiError(StatusCode::FORBIDDEN, "raw execution is disabled (start with --allow-raw-exec)".into()));
    }
    st.claim_live(RAW_SESSION)?;
    let st2 = st.clone();
    let out = tokio::task::spawn_blocking(move || -> Result<Value, ApiError> {
        let rules = st2.cfg.agent.rules.clone();
        let code = ActionCode::js(b.code);
        let verdict = analyze(&code.source, &rules).unwrap_or_else(|_| Verdict::allow());
        let before = st2.live_state();
        let snapshot_id = st2.store.take_snapshot(&before, RAW_SESSION, 0)?;
        let result = if verdict.decision == Decision::Allow {
            let (after, r) = execute(&code, &before, &st2.cfg.agent.limits, Guard::new(rules, false))
                .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
            if r.is_ok() {
                *st2.live.lock().unwrap() = after.clone();
                st2.store.save_host(&after)?;
            }
            r
        } else {
            denied_result(&verdict)
        };
        st2.store.append_audit(AuditRecord {
            session_id: RAW_SESSION.into(),
            iteration_index: 0,
            code_hash: Some(code.hash.clone()),
            verdict_decision: Some(verdict.decision.as_str().into()),
            result_status: result.status.as_str().into(),
            snapshot_id,
            state_diff: result.state_diff.clone(),
        })?;
        let mut v = serde_json::to_value(&result).expect("result serializes");
        v["verdict"] = serde_json::to_value(&verdict).expect("verdict serializes");
        v["snapshot_id"] = json!(snapshot_id);
        Ok(v)
    })
    .await
    .expect("execute task");
    st.release_live(RAW_SESSION);
    Ok(Json(out?).into_response())
}
