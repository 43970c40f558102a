//! HTTP service for live elicitation sessions.
//!
//! Each session wraps an engine whose duels are answered by a person through
//! a browser. Requests for one session are serialized by a per-session lock
//! and run on the blocking pool (external annotators make blocking calls);
//! distinct sessions proceed concurrently. Indices on the wire are 1-based.
//!
//! Routes:
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | [`CreateSessionRequest`] | 201, `{id, query}` |
//! | POST | `/sessions/import` | [`SessionArchive`] | 201, `{id, query}` |
//! | GET | `/sessions/{id}/query` | | [`QueryView`] |
//! | POST | `/sessions/{id}/feedback` | [`FeedbackRequest`] | `{ack, query, leaderboard}` |
//! | GET | `/sessions/{id}/state` | | [`StateView`] |
//! | POST | `/sessions/{id}/annotations` | `{annotations: [...]}` | `{added}` |
//! | GET | `/sessions/{id}/export` | | [`SessionArchive`] |

mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

pub use error::ApiError;
pub use session::{
    AnnotationPrompt, CachedWeight, CandidateCard, CreateSessionRequest, Demo, FeedbackRequest, HistoryEntry,
    LeaderboardEntry, ManualAnnotation, Outcome, QueryView, Session, SessionArchive, SessionConfig,
    SimilarityConfig, StateView, ARCHIVE_SCHEMA_VERSION,
};

/// Default cap on candidates per session.
pub const DEFAULT_MAX_K: usize = 200;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub max_k: usize,
    /// Writes `<id>.json` archives here after every change.
    pub snapshot_dir: Option<PathBuf>,
    /// Allowed browser origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_k: DEFAULT_MAX_K, snapshot_dir: None, cors_origin: None }
    }
}

struct Slot {
    session: Mutex<Session>,
    /// Version of the last snapshot written.
    written: Mutex<Option<u64>>,
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<RwLock<HashMap<String, Arc<Slot>>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self { config: Arc::new(config), sessions: Arc::default() }
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    fn insert(&self, session: Session) -> Arc<Slot> {
        let slot = Arc::new(Slot { session: Mutex::new(session), written: Mutex::new(None) });
        let id = slot.session.lock().expect("fresh lock").id().to_owned();
        self.sessions.write().expect("session map poisoned").insert(id, slot.clone());
        slot
    }

    /// Writes the archive unless a newer one is already on disk. Runs
    /// outside the session lock.
    fn persist(&self, slot: &Slot, version: u64, archive: Option<SessionArchive>, id: &str) -> Result<(), ApiError> {
        let (Some(dir), Some(archive)) = (&self.config.snapshot_dir, archive) else {
            return Ok(());
        };
        let mut written = slot.written.lock().expect("snapshot lock poisoned");
        if written.is_some_and(|w| version <= w) {
            return Ok(());
        }
        std::fs::create_dir_all(dir).map_err(ApiError::internal)?;
        let tmp = dir.join(format!("{id}.json.tmp"));
        let bytes = serde_json::to_vec_pretty(&archive).map_err(ApiError::internal)?;
        std::fs::write(&tmp, bytes).map_err(ApiError::internal)?;
        std::fs::rename(&tmp, dir.join(format!("{id}.json"))).map_err(ApiError::internal)?;
        *written = Some(version);
        Ok(())
    }
}

/// 128 random bits from the thread-local CSPRNG, as hex.
fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

/// Runs `f` on the session under its lock; snapshots afterwards if the
/// session changed.
async fn with_session<T: Send + 'static>(
    app: &AppState,
    id: String,
    f: impl FnOnce(&mut Session) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let slot = app.slot(&id)?;
    let app = app.clone();
    blocking(move || {
        let (out, version, archive) = {
            let mut session = slot.session.lock().map_err(|_| ApiError::internal("session lock poisoned"))?;
            let before = session.version();
            let out = f(&mut session);
            let changed = session.version() != before;
            let archive = (changed && app.config.snapshot_dir.is_some()).then(|| session.export());
            (out, session.version(), archive)
        };
        app.persist(&slot, version, archive, &id)?;
        out
    })
    .await
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub query: QueryView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackReply {
    pub ack: bool,
    pub query: QueryView,
    pub leaderboard: Vec<LeaderboardEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationsRequest {
    pub annotations: Vec<ManualAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationsReply {
    pub added: usize,
}

async fn register(app: AppState, make: impl FnOnce(String) -> Result<Session, ApiError> + Send + 'static) -> Result<(StatusCode, Json<Created>), ApiError> {
    let app2 = app.clone();
    let created = blocking(move || {
        let session = make(new_id())?;
        let query = session.query()?;
        let id = session.id().to_owned();
        let archive = app2.config.snapshot_dir.is_some().then(|| session.export());
        let version = session.version();
        let slot = app2.insert(session);
        app2.persist(&slot, version, archive, &id)?;
        Ok(Created { id, query })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn create_session(
    State(app): State<AppState>,
    payload: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let request = body(payload)?;
    let max_k = app.config.max_k;
    register(app, move |id| Session::new(id, request.resolve(max_k)?)).await
}

async fn import_session(
    State(app): State<AppState>,
    payload: Result<Json<SessionArchive>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let archive = body(payload)?;
    if archive.config.candidates.k() > app.config.max_k {
        return Err(ApiError::too_large(format!("archive has more than {} candidates", app.config.max_k)));
    }
    register(app, move |id| Session::replay(id, &archive)).await
}

async fn get_query(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<QueryView>, ApiError> {
    with_session(&app, id, |s| s.query()).await.map(Json)
}

async fn post_feedback(
    State(app): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<FeedbackReply>, ApiError> {
    app.slot(&id)?;
    let request = body(payload)?;
    with_session(&app, id, move |s| {
        s.feedback(&request)?;
        Ok(FeedbackReply { ack: true, query: s.query()?, leaderboard: s.leaderboard()? })
    })
    .await
    .map(Json)
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StateView>, ApiError> {
    with_session(&app, id, |s| s.snapshot()).await.map(Json)
}

async fn post_annotations(
    State(app): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<AnnotationsRequest>, JsonRejection>,
) -> Result<Json<AnnotationsReply>, ApiError> {
    app.slot(&id)?;
    let request = body(payload)?;
    with_session(&app, id, move |s| Ok(AnnotationsReply { added: s.annotate(&request.annotations)? }))
        .await
        .map(Json)
}

async fn export_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionArchive>, ApiError> {
    with_session(&app, id, |s| Ok(s.export())).await.map(Json)
}

pub fn router(app: AppState) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match app.config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => cors.allow_origin(origin),
        _ => cors.allow_origin(Any),
    };
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/import", post(import_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/annotations", post(post_annotations))
        .route("/sessions/{id}/export", get(export_session))
        .layer(cors)
        .with_state(app)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
