//! HTTP/WebSocket front end for live sessions.
//!
//! JSON endpoints control sessions; audio leaves through a WebSocket as
//! binary frames (see [`frame`]). Each session runs its own render task.

pub mod frame;
mod session;

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use bytes::Bytes;
use futures::{SinkExt, StreamExt};
use micfield::analysis::{angle_grid, monochromatic_pattern};
use micfield::audio_io::{decode_wav, read_wav, to_mono};
use micfield::config::{EngineConfig, MicConfig, SceneConfig, SourceConfig, SCHEMA_VERSION};
use micfield::{AudioBuffer, Error, IntegratorMode, Scene};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};

use session::{Command, SessionTask};
pub use session::{
    MicPatch, MicView, ParamEcho, PlayState, Position, SessionState, TransportAction,
    TransportState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// One block per block duration, like a sound card.
    Realtime,
    /// Blocks are rendered as fast as the subscribers' queues allow; for tests and batch clients.
    Free,
}

/// Mic layout and engine options used for new sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLayout {
    pub mics: Vec<MicConfig>,
    pub source: Position,
    #[serde(default)]
    pub engine: EngineConfig,
}

impl Default for SceneLayout {
    fn default() -> Self {
        Self {
            mics: vec![MicConfig {
                label: "mic".into(),
                x: 0.0,
                y: 0.0,
                orientation: 0.0,
                m: 0.5,
                d: micfield::geometry::DEFAULT_D,
                g: micfield::geometry::DEFAULT_G,
            }],
            source: Position { x: 1.0, y: 0.0 },
            engine: EngineConfig::default(),
        }
    }
}

impl From<&SceneConfig> for SceneLayout {
    fn from(cfg: &SceneConfig) -> Self {
        Self {
            mics: cfg.mics.clone(),
            source: Position {
                x: cfg.source.x,
                y: cfg.source.y,
            },
            engine: cfg.engine.clone(),
        }
    }
}

impl SceneLayout {
    /// Scene for a source at `fs`. A pinned engine rate that differs is a conflict, not a resample.
    pub fn scene(&self, fs: f64) -> Result<Scene, Error> {
        if let Some(pinned) = self.engine.fs {
            if pinned != fs {
                return Err(Error::SampleRate {
                    source_fs: fs,
                    engine_fs: pinned,
                });
            }
        }
        let cfg = SceneConfig {
            schema: SCHEMA_VERSION,
            source: SourceConfig {
                path: PathBuf::new(),
                x: self.source.x,
                y: self.source.y,
            },
            engine: self.engine.clone(),
            mics: self.mics.clone(),
            trajectory: Vec::new(),
        };
        cfg.scene(fs)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub layout: SceneLayout,
    pub pacing: Pacing,
    /// Frames buffered per subscriber before the oldest is dropped.
    pub queue_depth: usize,
    /// Interval between keepalive frames while paused.
    pub keepalive: Duration,
    pub max_upload_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            layout: SceneLayout::default(),
            pacing: Pacing::Realtime,
            queue_depth: 64,
            keepalive: Duration::from_secs(1),
            max_upload_bytes: 64 << 20,
        }
    }
}

#[derive(Clone)]
struct SessionHandle {
    tx: mpsc::Sender<Command>,
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<RwLock<HashMap<String, SessionHandle>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config: Arc::new(config),
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Starts a session on `source` (downmixed to mono). Must run inside a Tokio runtime.
    pub fn open_session(
        &self,
        source: AudioBuffer,
        layout: Option<&SceneLayout>,
    ) -> Result<String, ApiError> {
        let layout = layout.unwrap_or(&self.config.layout);
        let mono = to_mono(&source);
        let scene = layout.scene(mono.fs()).map_err(ApiError::from_core)?;
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let task = SessionTask::new(
            id.clone(),
            &scene,
            Arc::new(mono.into_samples()),
            &self.config,
        )
        .map_err(ApiError::from_core)?;
        let (tx, rx) = mpsc::channel(64);
        tokio::spawn(task.run(rx));
        self.sessions
            .write()
            .unwrap()
            .insert(id.clone(), SessionHandle { tx });
        Ok(id)
    }

    fn handle(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))
    }

    async fn ask<T>(
        &self,
        id: &str,
        make: impl FnOnce(oneshot::Sender<T>) -> Command,
    ) -> Result<T, ApiError> {
        let h = self.handle(id)?;
        let (tx, rx) = oneshot::channel();
        h.tx.send(make(tx))
            .await
            .map_err(|_| ApiError::NotFound(format!("session '{id}' has ended")))?;
        rx.await
            .map_err(|_| ApiError::NotFound(format!("session '{id}' has ended")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Unprocessable {
        message: String,
        fields: Vec<FieldError>,
    },
}

impl ApiError {
    fn from_core(e: Error) -> Self {
        Self::from_core_field(e, "scene")
    }

    /// `field` names the request field blamed for geometry errors.
    fn from_core_field(e: Error, field: &str) -> Self {
        let message = e.to_string();
        match innermost(&e) {
            Error::SampleRate { .. } => ApiError::Conflict(message),
            Error::Wav(_) | Error::Io(_) | Error::NotMono(_) | Error::Config(_) => {
                ApiError::BadRequest(message)
            }
            inner => {
                let field = match inner {
                    Error::Param { name, .. } => (*name).to_string(),
                    _ => field.to_string(),
                };
                ApiError::Unprocessable {
                    fields: vec![FieldError {
                        field,
                        message: inner.to_string(),
                    }],
                    message,
                }
            }
        }
    }
}

fn innermost(e: &Error) -> &Error {
    match e {
        Error::Mic { inner, .. } => innermost(inner),
        other => other,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
            #[serde(skip_serializing_if = "Vec::is_empty")]
            fields: Vec<FieldError>,
        }
        let (status, error, fields) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m, vec![]),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m, vec![]),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m, vec![]),
            ApiError::Unprocessable { message, fields } => {
                (StatusCode::UNPROCESSABLE_ENTITY, message, fields)
            }
        };
        (status, Json(Body { error, fields })).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/mics/{k}", patch(patch_mic))
        .route("/sessions/{id}/source", patch(patch_source))
        .route("/sessions/{id}/transport", post(transport))
        .route("/sessions/{id}/pattern", get(pattern))
        .route("/sessions/{id}/stream", get(stream))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": micfield::VERSION,
        "frame_version": frame::VERSION,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    path: PathBuf,
    #[serde(default)]
    layout: Option<SceneLayout>,
}

#[derive(Serialize)]
struct Created {
    id: String,
    state: SessionState,
}

/// JSON `{ "path": ..., "layout"?: ... }` loads a file on the server; any other
/// content type is taken as an uploaded WAV file.
async fn create_session(
    State(app): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let (buffer, layout) = if is_json {
        let req: CreateSession = parse_json(&body)?;
        let path = req.path.clone();
        let buffer = tokio::task::spawn_blocking(move || read_wav(&path))
            .await
            .map_err(|e| ApiError::BadRequest(e.to_string()))?
            .map_err(|e| ApiError::BadRequest(format!("{}: {e}", req.path.display())))?;
        (buffer, req.layout)
    } else {
        let buffer = decode_wav(&body).map_err(|e| ApiError::BadRequest(format!("upload: {e}")))?;
        (buffer, None)
    };
    let id = app.open_session(buffer, layout.as_ref())?;
    let state = app.ask(&id, Command::State).await?;
    Ok((StatusCode::CREATED, Json(Created { id, state })).into_response())
}

async fn delete_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    app.sessions
        .write()
        .unwrap()
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))
}

async fn get_state(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionState>, ApiError> {
    Ok(Json(app.ask(&id, Command::State).await?))
}

async fn patch_mic(
    State(app): State<AppState>,
    Path((id, k)): Path<(String, usize)>,
    body: Bytes,
) -> Result<Json<ParamEcho>, ApiError> {
    let patch: MicPatch = parse_json(&body)?;
    let state = app.ask(&id, Command::State).await?;
    if k >= state.mics.len() {
        return Err(ApiError::NotFound(format!("session '{id}' has no mic {k}")));
    }
    let field = if patch.d.is_some() { "d" } else { "mic" };
    app.ask(&id, |reply| Command::PatchMic {
        index: k,
        patch,
        reply,
    })
    .await?
    .map(Json)
    .map_err(|e| ApiError::from_core_field(e, field))
}

async fn patch_source(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ParamEcho>, ApiError> {
    let to: Position = parse_json(&body)?;
    app.ask(&id, |reply| Command::PatchSource { to, reply })
        .await?
        .map(Json)
        .map_err(|e| ApiError::from_core_field(e, "source"))
}

async fn transport(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<TransportState>, ApiError> {
    let action: TransportAction = parse_json(&body)?;
    app.ask(&id, |reply| Command::Transport { action, reply })
        .await?
        .map(Json)
        .map_err(ApiError::from_core)
}

#[derive(Deserialize)]
struct PatternQuery {
    f: f64,
    #[serde(default)]
    mode: IntegratorMode,
    #[serde(default)]
    mic: usize,
    #[serde(default = "default_points")]
    n: usize,
}

fn default_points() -> usize {
    72
}

async fn pattern(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PatternQuery>,
) -> Result<Response, ApiError> {
    let state = app.ask(&id, Command::State).await?;
    let mic = state
        .mics
        .get(q.mic)
        .ok_or_else(|| ApiError::NotFound(format!("session '{id}' has no mic {}", q.mic)))?;
    let params = micfield::MicParams {
        m: mic.m,
        d: mic.d,
        g: mic.g,
        c0: mic.c0,
        fs: mic.fs,
    };
    if q.n == 0 || q.n > 3600 {
        return Err(ApiError::Unprocessable {
            message: "n must lie in 1..=3600".into(),
            fields: vec![FieldError {
                field: "n".into(),
                message: "n must lie in 1..=3600".into(),
            }],
        });
    }
    let table = monochromatic_pattern(&params, q.f, mic.r, &angle_grid(q.n), q.mode)
        .map_err(|e| ApiError::from_core_field(e, "f"))?;
    Ok(Json(table).into_response())
}

async fn stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let sub = app.ask(&id, Command::Subscribe).await?;
    Ok(ws.on_upgrade(move |socket| pump(socket, sub)))
}

async fn pump(socket: WebSocket, sub: Arc<session::Subscriber>) {
    let (mut tx, mut rx) = socket.split();
    loop {
        tokio::select! {
            frame = sub.next() => {
                if tx.send(Message::Binary(frame)).await.is_err() {
                    break;
                }
            }
            msg = rx.next() => match msg {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
    sub.close();
}
