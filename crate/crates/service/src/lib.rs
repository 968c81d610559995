//! HTTP assistant service: each chat turn renders the session's live home
//! into a prompt, queries the backend, parses and validates the reply, and
//! executes the action on the session's simulated home. Outputs that fail
//! parsing or validation produce a templated fallback and leave the home
//! untouched.

mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use edgehome_core::backend::{BackendConfig, BackendHandle, GenerationRequest};
use edgehome_core::model::Device;
use edgehome_core::parser::{parse_assistant_output, ParseOutcome};
use edgehome_core::prompt::{render_chat, PromptError};
use edgehome_core::simulator::{execute, ExecutionRecord};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::cors::CorsLayer;

pub use error::ApiError;
pub use session::{
    context_from_body, ActionView, ChatResponse, DeviceConfig, HistoryEntry, HomeConfig, Outcome, Session,
    SessionSnapshot,
};

pub const FALLBACK_TEXT: &str = "Sorry, I couldn't complete that request.";

pub struct AppState {
    backend: Arc<BackendHandle>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    pub fn new(backend: BackendHandle) -> Self {
        AppState {
            backend: Arc::new(backend),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn backend(&self) -> &BackendHandle {
        &self.backend
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    pub fn insert(&self, session: Session) -> Arc<Session> {
        let session = Arc::new(session);
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(session.id.clone(), Arc::clone(&session));
        session
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn snapshots(&self) -> Vec<SessionSnapshot> {
        let mut all: Vec<SessionSnapshot> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .map(|s| s.snapshot())
            .collect();
        all.sort_by(|a, b| {
            a.created_at
                .total_cmp(&b.created_at)
                .then(a.session_id.cmp(&b.session_id))
        });
        all
    }

    pub fn save_snapshot(&self, path: &FsPath) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self.snapshots()).map_err(std::io::Error::other)?;
        std::fs::write(path, json)
    }

    /// Restores sessions written by [`AppState::save_snapshot`]; returns how
    /// many were loaded.
    pub fn load_snapshot(&self, path: &FsPath) -> Result<usize, ServiceError> {
        let text = std::fs::read_to_string(path)?;
        let snapshots: Vec<SessionSnapshot> =
            serde_json::from_str(&text).map_err(|e| ServiceError::Snapshot(e.to_string()))?;
        let n = snapshots.len();
        for snap in snapshots {
            let session = Session::restore(snap).map_err(|e| ServiceError::Snapshot(e.to_string()))?;
            self.insert(session);
        }
        Ok(n)
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Backend(#[from] edgehome_core::backend::BackendError),
}

type AppResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

#[derive(Debug, Serialize)]
struct SessionCreated {
    session_id: String,
    system_prompt: String,
    devices: Vec<Device>,
}

async fn create_session(State(app): Shared, body: Bytes) -> AppResult<(StatusCode, Json<SessionCreated>)> {
    let ctx = context_from_body(&body)?;
    let system_prompt =
        edgehome_core::render_system_prompt(&ctx).map_err(|e| ApiError::InvalidHomeConfig(e.to_string()))?;
    let devices = ctx.registry.iter().cloned().collect();
    let session = app.insert(Session::new(uuid::Uuid::new_v4().to_string(), ctx)?);
    log::info!("created session {}", session.id);
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: session.id.clone(),
            system_prompt,
            devices,
        }),
    ))
}

#[derive(Debug, Deserialize)]
struct ChatRequest {
    text: String,
}

fn bad_request(e: impl ToString) -> ApiError {
    ApiError::InvalidRequest(e.to_string())
}

/// One pipeline turn. Turns within a session run one at a time; the
/// backend call itself runs on the blocking pool.
pub async fn handle_chat(app: &AppState, session_id: &str, user_text: &str) -> AppResult<ChatResponse> {
    let session = app.session(session_id)?;
    let _turn = session.turn.lock().await;
    let context = session.read().context.clone();
    let prompt = render_chat(&context, user_text).map_err(|e| match e {
        PromptError::EmptyUtterance => bad_request("text must not be empty"),
        other => ApiError::Internal(other.to_string()),
    })?;
    let backend = Arc::clone(&app.backend);
    let generated = tokio::task::spawn_blocking(move || backend.generate(&GenerationRequest::new(prompt)))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;

    let out = parse_assistant_output(&generated.text, &context.catalog, &context.registry);
    let mut state = session.write();
    let state = &mut *state;
    let executed: Result<ExecutionRecord, String> = match (&out.outcome, &out.action) {
        (ParseOutcome::Ok, Some(action)) => execute(action, &mut state.context.registry, &state.table, &mut state.log)
            .map_err(|e| e.class_name().to_string()),
        (outcome, _) => Err(outcome.class_name().to_string()),
    };
    let response = match &executed {
        Ok(record) => ChatResponse {
            response_text: out.response_text.clone(),
            action: out.raw_action.as_ref().map(ActionView::from),
            new_state: Some(record.new_state.clone()),
            outcome: Outcome::Ok,
            latency_seconds: generated.latency_seconds,
            model: generated.model.clone(),
        },
        Err(reason) => ChatResponse {
            response_text: FALLBACK_TEXT.to_string(),
            action: None,
            new_state: None,
            outcome: Outcome::Fallback(reason.clone()),
            latency_seconds: generated.latency_seconds,
            model: generated.model.clone(),
        },
    };
    state.history.push(HistoryEntry {
        user_text: user_text.to_string(),
        assistant_text: generated.text,
        outcome: response.outcome.clone(),
        record: executed.as_ref().ok().map(session::record_json),
    });
    Ok(response)
}

async fn chat(
    State(app): Shared,
    Path(id): Path<String>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> AppResult<Json<ChatResponse>> {
    let Json(req) = body.map_err(|e| bad_request(e.body_text()))?;
    handle_chat(&app, &id, &req.text).await.map(Json)
}

async fn devices(State(app): Shared, Path(id): Path<String>) -> AppResult<Json<Vec<Device>>> {
    let session = app.session(&id)?;
    let devices = session.read().context.registry.iter().cloned().collect();
    Ok(Json(devices))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    cursor: u64,
}

async fn events(
    State(app): Shared,
    Path(id): Path<String>,
    query: Result<Query<EventsQuery>, QueryRejection>,
) -> AppResult<Json<Value>> {
    let Query(q) = query.map_err(|e| bad_request(e.body_text()))?;
    let session = app.session(&id)?;
    let state = session.read();
    let (records, next) = state.log.since(q.cursor);
    Ok(Json(json!({"events": records, "next_cursor": next})))
}

async fn history(State(app): Shared, Path(id): Path<String>) -> AppResult<Json<Vec<HistoryEntry>>> {
    let session = app.session(&id)?;
    let history = session.read().history.clone();
    Ok(Json(history))
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn config(State(app): Shared) -> Json<Value> {
    let cfg = app.backend.config();
    Json(json!({
        "model_descriptor": cfg.model,
        "backend_kind": cfg.kind,
        "worker_threads": cfg.worker_threads,
        "max_context_tokens": cfg.max_context_tokens,
        "sessions": app.session_count(),
    }))
}

async fn not_found() -> ApiError {
    ApiError::NoRoute
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/devices", get(devices))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/history", get(history))
        .route("/healthz", get(healthz))
        .route("/config", get(config))
        .fallback(not_found)
        .layer(CorsLayer::permissive())
        .with_state(app)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    /// Sessions are restored from here at startup and written back on
    /// shutdown.
    #[serde(default)]
    pub snapshot_path: Option<PathBuf>,
    pub backend: BackendConfig,
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

/// Loads the backend, serves until Ctrl-C, then writes the session snapshot.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let backend_cfg = config.backend.clone();
    let (backend, load_seconds) =
        tokio::task::spawn_blocking(move || edgehome_core::backend::load_backend(&backend_cfg))
            .await
            .map_err(|e| ServiceError::Io(std::io::Error::other(e)))??;
    log::info!("backend {} loaded in {load_seconds:.2}s", backend.descriptor().label());
    let app = Arc::new(AppState::new(backend));
    if let Some(path) = config.snapshot_path.as_deref().filter(|p| p.exists()) {
        let n = app.load_snapshot(path)?;
        log::info!("restored {n} sessions from {}", path.display());
    }
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::clone(&app)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(path) = &config.snapshot_path {
        app.save_snapshot(path)?;
        log::info!("saved {} sessions to {}", app.session_count(), path.display());
    }
    Ok(())
}
