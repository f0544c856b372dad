//! HTTP/JSON gateway over the session engine, with a WebSocket push channel
//! per session. Routes and wire types are described in `docs/api.md`.

mod error;
mod idempotency;
mod push;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use bytes::Bytes;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, Mutex};

use edg_core::api::{CreateSessionRequest, CreateSessionResponse, JoinRequest, SubmitTurnRequest};
use edg_core::labels::LabelTable;
use edg_core::session::{Command, EventStore, FileEventStore, Outcome, Session, SessionError, SessionEvent};
use edg_core::LocutionId;

pub use error::ApiError;
pub use idempotency::IDEMPOTENCY_HEADER;

use idempotency::{Cached, IdempotencyCache};

/// Events buffered per subscriber before it is dropped as too slow.
const PUSH_BUFFER: usize = 1024;

struct Slot {
    session: Mutex<Session>,
    tx: broadcast::Sender<SessionEvent>,
}

impl Slot {
    fn new(session: Session) -> Arc<Self> {
        let (tx, _) = broadcast::channel(PUSH_BUFFER);
        Arc::new(Self { session: Mutex::new(session), tx })
    }
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Arc<dyn EventStore>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    labels: LabelTable,
    idempotency: IdempotencyCache,
}

impl AppState {
    /// Builds the service over `store`, replaying every session it holds.
    /// Sessions whose log cannot be replayed are logged and left offline.
    pub fn recover(store: Arc<dyn EventStore>) -> Result<Self, SessionError> {
        let mut sessions = HashMap::new();
        for id in store.sessions()? {
            let events = match store.load(&id) {
                Ok(evs) => evs,
                Err(e) => {
                    tracing::error!(session = %id, error = %e, "cannot load session log");
                    continue;
                }
            };
            match Session::replay(&id, &events) {
                Ok(s) if s.seq() > 0 => {
                    sessions.insert(id, Slot::new(s));
                }
                Ok(_) => tracing::warn!(session = %id, "skipping empty session log"),
                Err(e) => tracing::error!(session = %id, error = %e, "cannot replay session log"),
            }
        }
        tracing::info!(count = sessions.len(), "recovered sessions");
        Ok(Self {
            inner: Arc::new(Inner {
                store,
                sessions: RwLock::new(sessions),
                labels: LabelTable::medical(),
                idempotency: IdempotencyCache::default(),
            }),
        })
    }

    pub fn with_labels(self, labels: LabelTable) -> Self {
        let inner = Arc::into_inner(self.inner).expect("labels are set before the state is shared");
        Self { inner: Arc::new(Inner { labels, ..inner }) }
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        let sessions = self.inner.sessions.read().expect("session map poisoned");
        sessions.get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    async fn persist(&self, id: &str, events: &[SessionEvent]) -> Result<(), SessionError> {
        let store = self.inner.store.clone();
        let id = id.to_string();
        let events = events.to_vec();
        tokio::task::spawn_blocking(move || store.append(&id, &events))
            .await
            .map_err(|e| SessionError::Storage(e.to_string()))?
    }

    async fn load(&self, id: &str) -> Result<Vec<SessionEvent>, SessionError> {
        let store = self.inner.store.clone();
        let id = id.to_string();
        tokio::task::spawn_blocking(move || store.load(&id)).await.map_err(|e| SessionError::Storage(e.to_string()))?
    }

    /// Decide, append durably, apply, then publish. Runs under the session lock
    /// so subscribers see events in the order they were written.
    async fn execute(&self, id: &str, cmd: Command) -> Result<Outcome, ApiError> {
        let slot = self.slot(id)?;
        let mut session = slot.session.lock().await;
        let (outcome, events) = session.decide(&cmd, now_ms())?;
        self.persist(id, &events).await?;
        for ev in &events {
            session.apply(ev)?;
            let _ = slot.tx.send(ev.clone());
        }
        Ok(outcome)
    }

    async fn create(&self, req: CreateSessionRequest) -> Result<CreateSessionResponse, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let (session, created) = Session::create(&id, req.config, now_ms())?;
        self.persist(&id, std::slice::from_ref(&created)).await?;
        self.inner.sessions.write().expect("session map poisoned").insert(id.clone(), Slot::new(session));
        tracing::info!(session = %id, "created session");
        Ok(CreateSessionResponse { session: id })
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// The service routes.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/join", post(join))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/turns", post(submit_turn))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/replies", get(replies))
        .route("/sessions/{id}/events", get(push::subscribe))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such route").into_response() })
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_with_shutdown(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Opens (or creates) a file-backed log directory, recovers its sessions and
/// serves on `addr` until Ctrl-C.
pub async fn run(addr: SocketAddr, log_dir: &Path) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let store = Arc::new(FileEventStore::open(log_dir)?);
    let state = AppState::recover(store)?;
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, log_dir = %log_dir.display(), "listening");
    serve_with_shutdown(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.to_string()))
}

fn ok<T: Serialize>(status: StatusCode, value: &T) -> Cached {
    Cached::json(status, value)
}

/// Runs a POST handler at most once per idempotency key.
async fn once<F, Fut>(state: &AppState, scope: String, headers: &HeaderMap, body: Bytes, f: F) -> Response
where
    F: FnOnce(Bytes) -> Fut,
    Fut: std::future::Future<Output = Result<Cached, ApiError>>,
{
    let key = match idempotency::key(headers) {
        Ok(k) => k,
        Err(e) => return e.into_response(),
    };
    state
        .inner
        .idempotency
        .run(format!("{scope}\n{key}"), body, |body| async move { f(body).await.unwrap_or_else(Cached::from) })
        .await
        .into_response()
}

async fn create_session(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let st = state.clone();
    once(&state, "create".into(), &headers, body, |body| async move {
        let req: CreateSessionRequest =
            if body.iter().all(u8::is_ascii_whitespace) { CreateSessionRequest::default() } else { parse(&body)? };
        Ok(ok(StatusCode::CREATED, &st.create(req).await?))
    })
    .await
}

async fn join(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let st = state.clone();
    once(&state, format!("join/{id}"), &headers, body, |body| async move {
        let req: JoinRequest = parse(&body)?;
        match st.execute(&id, Command::Join { name: req.name, role: req.role }).await? {
            Outcome::Joined(r) => Ok(ok(StatusCode::OK, &r)),
            other => Err(ApiError::unexpected(&other)),
        }
    })
    .await
}

async fn start(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let st = state.clone();
    once(&state, format!("start/{id}"), &headers, body, |_| async move {
        match st.execute(&id, Command::Start).await? {
            Outcome::Started(r) => Ok(ok(StatusCode::OK, &r)),
            other => Err(ApiError::unexpected(&other)),
        }
    })
    .await
}

async fn submit_turn(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let st = state.clone();
    once(&state, format!("turns/{id}"), &headers, body, |body| async move {
        let req: SubmitTurnRequest = parse(&body)?;
        match st.execute(&id, Command::SubmitTurn { speaker: req.speaker, moves: req.moves }).await? {
            Outcome::Accepted(r) => Ok(ok(StatusCode::OK, &r)),
            Outcome::Rejected { code, message, violations } => Err(ApiError::rejected(code, message, violations)),
            other => Err(ApiError::unexpected(&other)),
        }
    })
    .await
}

async fn snapshot(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match state.slot(&id) {
        Ok(slot) => ok(StatusCode::OK, &slot.session.lock().await.snapshot()).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct RepliesQuery {
    target: Option<String>,
}

async fn replies(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<RepliesQuery>,
) -> Response {
    let result = async {
        let slot = state.slot(&id)?;
        let target =
            q.target.as_deref().and_then(|t| t.parse::<u64>().ok()).ok_or_else(|| {
                ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", "`target` must be a locution id")
            })?;
        let session = slot.session.lock().await;
        Ok::<_, ApiError>(session.legal_replies(LocutionId(target), &state.inner.labels)?)
    }
    .await;
    match result {
        Ok(r) => ok(StatusCode::OK, &r).into_response(),
        Err(e) => e.into_response(),
    }
}
