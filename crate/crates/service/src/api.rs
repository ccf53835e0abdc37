//! HTTP API over in-memory sessions.
//!
//! Each session sits behind a mutex that training holds for the whole
//! iteration. Reads go to a cached view that is refreshed after every change,
//! so the annotation client can poll status and queue while a model trains.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use eventsift_core::corpus::ManifestRecord;
use eventsift_core::session::{
    CorpusSource, IterationRecord, Phase, PostPrediction, Session, SessionConfig, SessionError,
    SessionWarning,
};
use eventsift_core::BinaryLabel;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServerConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Suggested polling interval while a model trains.
pub const RETRY_AFTER_MS: u64 = 2_000;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }

    fn busy() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "busy",
            "the session is training; retry once the queue is refilled",
        )
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_payload", r.body_text())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
            SessionError::AlreadyLabeled(_) => (StatusCode::CONFLICT, "already_labeled"),
            SessionError::UnknownId(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_post"),
            SessionError::NotPending(_) => (StatusCode::UNPROCESSABLE_ENTITY, "not_pending"),
            SessionError::DuplicateInBatch(_) => (StatusCode::UNPROCESSABLE_ENTITY, "duplicate_in_batch"),
            SessionError::InvalidConfig(_) | SessionError::Model(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config")
            }
            SessionError::Corpus(_) | SessionError::Graph(_) | SessionError::MissingGold(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_corpus")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub id: String,
    pub text: String,
    pub image_ref: String,
    pub score: Option<f64>,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Analyst label, when the post has one.
    pub label: Option<BinaryLabel>,
    pub pseudo_labeled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSummary {
    pub labeled_count: usize,
    pub pseudo_count: usize,
    pub pending_count: usize,
    pub corpus_size: usize,
    pub augmentation_count: usize,
    pub budget_schedule: Vec<usize>,
}

/// Everything the read endpoints serve.
#[derive(Debug, Clone)]
struct View {
    phase: Phase,
    iteration: u32,
    queue: Vec<QueueItem>,
    summary: StatusSummary,
    history: Vec<IterationRecord>,
    warnings: Vec<SessionWarning>,
    predictions: Option<Vec<PostPrediction>>,
    last_error: Option<String>,
}

impl View {
    fn of(session: &Session) -> Self {
        let corpus = session.corpus();
        let queue = session
            .pending()
            .iter()
            .map(|e| {
                let post = corpus.post(corpus.index_of(&e.id).expect("queued ids exist"));
                QueueItem {
                    id: e.id.clone(),
                    text: post.text.clone(),
                    image_ref: post.image_ref.clone(),
                    score: e.score,
                    cluster: e.cluster,
                }
            })
            .collect();
        View {
            phase: session.phase(),
            iteration: session.iteration(),
            queue,
            summary: StatusSummary {
                labeled_count: session.labeled_count(),
                pseudo_count: session.pseudo_count(),
                pending_count: session.pending().len(),
                corpus_size: corpus.len(),
                augmentation_count: corpus.augmentation_ids().len(),
                budget_schedule: session.config().budget_schedule.clone(),
            },
            history: session.history().to_vec(),
            warnings: session.warnings().to_vec(),
            predictions: session.predictions(),
            last_error: None,
        }
    }
}

struct SessionHandle {
    session: Mutex<Session>,
    view: RwLock<View>,
    /// Computed once; embeddings never change.
    projection: Vec<(String, [f64; 2])>,
    created_at: u64,
}

impl SessionHandle {
    fn new(session: Session) -> Self {
        SessionHandle {
            view: RwLock::new(View::of(&session)),
            projection: session.projection(),
            session: Mutex::new(session),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    fn view(&self) -> View {
        self.view.read().expect("view lock").clone()
    }

    fn refresh(&self, session: &Session, last_error: Option<String>) {
        let mut view = View::of(session);
        view.last_error = last_error;
        *self.view.write().expect("view lock") = view;
    }
}

pub struct AppState {
    config: ServerConfig,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        AppState {
            config,
            sessions: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Adds saved sessions from `session_dir`. Returns how many were loaded.
    pub fn load_saved(&self) -> Result<usize, SessionError> {
        let Some(dir) = &self.config.session_dir else {
            return Ok(0);
        };
        if !dir.exists() {
            return Ok(0);
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut loaded = 0;
        for path in paths {
            let session = Session::restore(&path)?;
            self.insert(session);
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().expect("sessions lock").keys().cloned().collect()
    }

    fn insert(&self, session: Session) -> String {
        let id = session.id().to_string();
        if let Some(n) = id.strip_prefix("session-").and_then(|n| n.parse::<u64>().ok()) {
            self.next_id.fetch_max(n + 1, Ordering::SeqCst);
        }
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id.clone(), Arc::new(SessionHandle::new(session)));
        id
    }

    fn handle(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    fn persist(&self, session: &Session) -> Result<(), SessionError> {
        if let Some(dir) = &self.config.session_dir {
            std::fs::create_dir_all(dir)?;
            session.save(&dir.join(format!("{}.json", session.id())))?;
        }
        Ok(())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/queue", get(queue))
        .route("/sessions/{id}/labels", post(labels))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/predictions", get(predictions))
        .route("/sessions/{id}/projection", get(projection))
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Event manifest path, relative to the data root.
    pub manifest: Option<PathBuf>,
    pub pool_manifest: Option<PathBuf>,
    /// Inline records instead of a manifest.
    pub posts: Option<Vec<ManifestRecord>>,
    #[serde(default)]
    pub pool: Vec<ManifestRecord>,
    pub config: Option<SessionConfig>,
    #[serde(default)]
    pub seed: u64,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let Json(req) = body?;
    let source = match (req.manifest, req.posts) {
        (Some(manifest), None) => CorpusSource::Manifests {
            manifest: state.config.resolve(&manifest),
            pool: req.pool_manifest.map(|p| state.config.resolve(&p)),
        },
        (None, Some(posts)) if req.pool_manifest.is_none() => CorpusSource::Inline {
            event: posts,
            pool: req.pool,
        },
        _ => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "malformed_payload",
                "give either manifest (with optional pool_manifest) or inline posts",
            ))
        }
    };
    let config = req.config.unwrap_or_else(|| state.config.session.clone());
    let seed = req.seed;
    let session = tokio::task::spawn_blocking(move || Session::from_source(source, config, seed))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let mut session = session;
    session.set_id(format!("session-{}", state.next_id.fetch_add(1, Ordering::SeqCst)));
    state.persist(&session)?;
    let id = state.insert(session);
    let handle = state.handle(&id)?;
    Ok((StatusCode::CREATED, Json(status_body(&id, &handle))))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "schema_version": SCHEMA_VERSION, "sessions": state.session_ids() }))
}

async fn queue(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let view = state.handle(&id)?.view();
    let training = matches!(view.phase, Phase::Training | Phase::ReadyForSelection);
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": id,
        "phase": view.phase,
        "iteration": view.iteration,
        "items": view.queue,
        "retry_after_ms": training.then_some(RETRY_AFTER_MS),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelEntry {
    pub id: String,
    pub label: BinaryLabel,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelBatch {
    pub labels: Vec<LabelEntry>,
}

async fn labels(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<LabelBatch>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let handle = state.handle(&id)?;
    let Json(batch) = body?;
    let pairs: Vec<(String, BinaryLabel)> = batch.labels.into_iter().map(|e| (e.id, e.label)).collect();
    let accepted = pairs.len();
    let phase = {
        let mut session = handle.session.try_lock().map_err(|_| ApiError::busy())?;
        session.submit_labels(&pairs)?;
        handle.refresh(&session, None);
        if let Err(e) = state.persist(&session) {
            handle.refresh(&session, Some(e.to_string()));
        }
        session.phase()
    };
    if phase == Phase::Training {
        let (state, handle) = (state.clone(), handle.clone());
        tokio::task::spawn_blocking(move || {
            let mut session = handle.session.lock().expect("session lock");
            let outcome = session.run_iteration().and_then(|()| state.persist(&session));
            handle.refresh(&session, outcome.err().map(|e| e.to_string()));
        });
    }
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": id,
        "accepted": accepted,
        "phase": phase,
    })))
}

fn status_body(id: &str, handle: &SessionHandle) -> serde_json::Value {
    let view = handle.view();
    json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": id,
        "phase": view.phase,
        "iteration": view.iteration,
        "summary": view.summary,
        "history": view.history,
        "warnings": view.warnings,
        "last_error": view.last_error,
        "created_at": handle.created_at,
    })
}

async fn status(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let handle = state.handle(&id)?;
    Ok(Json(status_body(&id, &handle)))
}

async fn predictions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let view = state.handle(&id)?.view();
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": id,
        "iteration": view.iteration,
        "available": view.predictions.is_some(),
        "items": view.predictions.unwrap_or_default(),
    })))
}

async fn projection(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let handle = state.handle(&id)?;
    // Labels change between iterations; take them from the session when it is
    // free and fall back to bare coordinates while it trains.
    let labels: BTreeMap<String, (Option<BinaryLabel>, bool)> = match handle.session.try_lock() {
        Ok(session) => {
            let corpus = session.corpus();
            handle
                .projection
                .iter()
                .filter_map(|(pid, _)| {
                    let state = corpus.label_of(pid)?;
                    let human = if state.is_annotation() {
                        eventsift_core::corpus::effective_binary_label(state).ok()
                    } else {
                        None
                    };
                    Some((pid.clone(), (human, state.value.is_pseudo())))
                })
                .collect()
        }
        Err(_) => BTreeMap::new(),
    };
    let items: Vec<ProjectionPoint> = handle
        .projection
        .iter()
        .map(|(pid, [x, y])| {
            let (label, pseudo_labeled) = labels.get(pid).copied().unwrap_or((None, false));
            ProjectionPoint {
                id: pid.clone(),
                x: *x,
                y: *y,
                label,
                pseudo_labeled,
            }
        })
        .collect();
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": id,
        "items": items,
    })))
}
