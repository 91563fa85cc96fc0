use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use agentcoach_core::scorecard::{aggregate_metrics, ScoreError, Scorer, SessionScore, TrainingMetrics};
use agentcoach_core::simcore::{
    agent_reply, close_session, request_hint, start_session, BotTurnResult, CloseReason, Engine,
    HintResult, Phase, SessionRecord, SimError, SimPolicy,
};

use crate::artifacts::{scene_summaries, Artifacts, SceneSummary};
use crate::config::ServiceConfig;
use crate::store::{SessionStore, StoreError};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

pub struct AppState {
    pub engine: Arc<Engine>,
    pub scorer: Arc<Scorer>,
    pub store: Arc<SessionStore>,
    pub policy: SimPolicy,
    pub clock: Arc<dyn Clock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    IllegalState,
    BadRequest,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::IllegalState => StatusCode::CONFLICT,
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }

    fn session_not_found(id: &str) -> Self {
        ApiError::new(ErrorCode::NotFound, format!("session {id} not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::NotFound(_) => ErrorCode::NotFound,
            SimError::IllegalState(_) => ErrorCode::IllegalState,
            SimError::BadInput(_) => ErrorCode::BadRequest,
            SimError::Config(_) | SimError::Respond(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!("session log: {e}");
        ApiError::new(ErrorCode::Internal, e.to_string())
    }
}

impl From<ScoreError> for ApiError {
    fn from(e: ScoreError) -> Self {
        let code = match e {
            ScoreError::Undefined(_) => ErrorCode::IllegalState,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub scene_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub scene_id: String,
    pub opening_utterance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PostMessage {
    pub text: String,
    #[serde(default)]
    pub idempotency_token: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CloseRequest {
    #[serde(default)]
    pub reason: Option<CloseReason>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/hint", post(post_hint))
        .route("/sessions/{id}/close", post(post_close))
        .route("/sessions/{id}/score", get(get_score))
        .route("/metrics", get(get_metrics))
        .with_state(state)
}

async fn list_scenes(State(app): State<Arc<AppState>>) -> Json<Vec<SceneSummary>> {
    Json(scene_summaries(&app.engine))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let wait_started = app.clock.now_ms();
    let created = blocking(move || {
        let session_id = uuid::Uuid::new_v4().to_string();
        let assigned = app.clock.now_ms();
        let (state, opening) =
            start_session(&app.engine, &session_id, &req.scene_id, &app.policy, wait_started, assigned)?;
        app.store.insert(state)?;
        Ok(SessionCreated {
            session_id,
            scene_id: req.scene_id,
            opening_utterance: opening,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionRecord>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let state = handle.lock().await;
    Ok(Json(state.snapshot()))
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<BotTurnResult>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let req: PostMessage = parse_body(&body)?;
    let mut state = handle.lock_owned().await;
    let result = blocking(move || {
        if let Some(prev) = req.idempotency_token.as_deref().and_then(|t| state.reply_for(t)) {
            return Ok(prev.clone());
        }
        if req.text.trim().is_empty() {
            return Err(ApiError::new(ErrorCode::BadRequest, "message text is empty"));
        }
        let now = app.clock.now_ms();
        let result = agent_reply(&app.engine, &mut state, &req.text, req.idempotency_token.as_deref(), now)?;
        app.store.commit(&mut state)?;
        Ok(result)
    })
    .await?;
    Ok(Json(result))
}

async fn post_hint(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<HintResult>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let mut state = handle.lock_owned().await;
    let hint = blocking(move || {
        let hint = request_hint(&mut state, app.clock.now_ms())?;
        app.store.commit(&mut state)?;
        Ok(hint)
    })
    .await?;
    Ok(Json(hint))
}

async fn post_close(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionRecord>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let req: CloseRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CloseRequest::default()
    } else {
        parse_body(&body)?
    };
    let mut state = handle.lock_owned().await;
    let record = blocking(move || {
        let reason = req.reason.unwrap_or(if state.phase() == Phase::Completed {
            CloseReason::Completed
        } else {
            CloseReason::TraineeQuit
        });
        let record = close_session(&mut state, reason, app.clock.now_ms())?;
        app.store.commit(&mut state)?;
        Ok(record)
    })
    .await?;
    Ok(Json(record))
}

async fn get_score(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionScore>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let record = handle.lock().await.snapshot();
    let score = blocking(move || Ok(app.scorer.score(&record)?)).await?;
    Ok(Json(score))
}

/// Metrics over every known session; all zeros when there are none.
async fn get_metrics(State(app): State<Arc<AppState>>) -> Result<Json<TrainingMetrics>, ApiError> {
    let mut records = Vec::new();
    for (_, h) in app.store.handles() {
        records.push(h.lock().await.snapshot());
    }
    if records.is_empty() {
        return Ok(Json(TrainingMetrics {
            waiting_time_avg: 0.0,
            avg_duration: 0.0,
            avg_rounds: 0.0,
            completion_rate: 0.0,
            sessions: 0,
        }));
    }
    Ok(Json(aggregate_metrics(&records)?))
}

/// Loads artifacts and replays the session logs.
pub fn build_state(cfg: &ServiceConfig) -> anyhow::Result<AppState> {
    let artifacts = Artifacts::load(cfg)?;
    let store = SessionStore::open(&cfg.resolve(&cfg.paths.log_dir))?;
    tracing::info!(sessions = store.len(), "replayed session logs");
    Ok(AppState {
        engine: Arc::new(artifacts.engine(cfg)),
        scorer: Arc::new(artifacts.scorer()),
        store: Arc::new(store),
        policy: cfg.session_policy(),
        clock: Arc::new(SystemClock),
    })
}

/// Serves until Ctrl-C. Prints `listening on ADDR` once bound.
pub async fn serve(cfg: &ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(build_state(cfg)?);
    let listener = tokio::net::TcpListener::bind(&cfg.bind).await?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    std::io::stdout().flush()?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A server on its own runtime thread, stopped on drop.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(state: Arc<AppState>, bind: &str) -> std::io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind(bind))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(BackgroundServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
