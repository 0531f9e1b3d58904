//! JSON-over-HTTP access to sessions, flowcharts and trails.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use triage_core::conversation::{trail_jsonl, ConversationError, Engine, Session, SessionView};
use triage_core::demographics::{AgeUnit, Sex};
use triage_core::flowchart::{load_library, parse_flowchart, to_document_value, validate, Applicability};

use crate::config::{ServiceConfig, StoreMode};
use crate::stack::{build_engine, provider_from_env, StackError};
use crate::store::{SessionStore, StoreError};

pub struct AppState {
    pub engine: Arc<Engine>,
    pub store: SessionStore,
}

impl AppState {
    pub fn new(engine: Engine, store: SessionStore) -> Arc<Self> {
        Arc::new(AppState { engine: Arc::new(engine), store })
    }
}

/// An error response: `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_body", message)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": {"code": self.code, "message": self.message}}))).into_response()
    }
}

impl From<ConversationError> for ApiError {
    fn from(e: ConversationError) -> Self {
        let (status, code) = match &e {
            ConversationError::SessionClosed { .. } => (StatusCode::CONFLICT, "session_closed"),
            ConversationError::SwitchNotAllowed(_) => (StatusCode::CONFLICT, "switch_not_allowed"),
            ConversationError::InvalidDemographics(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_demographics"),
            ConversationError::UnresolvableRedirect { .. } | ConversationError::RedirectDepthExceeded { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "redirect_failed")
            }
            e if e.is_provider_unavailable() => (StatusCode::SERVICE_UNAVAILABLE, "provider_unavailable"),
            ConversationError::ClassifierFailure(_) | ConversationError::Retrieval(_) => (StatusCode::BAD_GATEWAY, "provider_error"),
            ConversationError::CorruptSession(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_session"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", e.to_string())
    }
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub sex: Option<String>,
    pub age_value: Option<u32>,
    /// Defaults to years when only a value is given.
    pub age_unit: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostMessage {
    pub text: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchRequest {
    pub flowchart_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnResponse {
    pub reply: String,
    pub session: SessionView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlowchartSummary {
    pub id: String,
    pub name: String,
    pub specialty: String,
    pub applicability: Applicability,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/trail", get(get_trail))
        .route("/sessions/{id}/switch", post(switch_flowchart))
        .route("/flowcharts", get(list_flowcharts))
        .route("/flowcharts/{id}", get(get_flowchart))
        .route("/flowcharts:validate", post(validate_flowchart))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let sex = req.sex.map(|s| s.parse::<Sex>()).transpose().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let unit = req.age_unit.map(|u| u.parse::<AgeUnit>()).transpose().map_err(|e| ApiError::bad_request(e.to_string()))?;
    if unit.is_some() && req.age_value.is_none() {
        return Err(ApiError::bad_request("age_unit given without age_value"));
    }
    let age = req.age_value.map(|v| (v, unit.unwrap_or(AgeUnit::Years)));
    let session = st.engine.start_session_from(sex, age)?;
    let view = st.engine.view(&session);
    st.store.insert(session)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = st.store.get(&id)?.ok_or_else(|| ApiError::not_found("session", &id))?;
    let session = slot.session.lock().await;
    Ok(Json(st.engine.view(&session)))
}

async fn get_trail(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = st.store.get(&id)?.ok_or_else(|| ApiError::not_found("session", &id))?;
    let body = trail_jsonl(&slot.session.lock().await.trail);
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// Runs one engine call on the blocking pool while holding the session lock.
async fn turn(
    st: Arc<AppState>,
    id: String,
    op: impl FnOnce(&Engine, &mut Session) -> Result<String, ConversationError> + Send + 'static,
) -> Result<Json<TurnResponse>, ApiError> {
    let slot = st.store.get(&id)?.ok_or_else(|| ApiError::not_found("session", &id))?;
    let mut guard = slot.session.clone().lock_owned().await;
    let engine = st.engine.clone();
    let (guard, result) = tokio::task::spawn_blocking(move || {
        let r = op(&engine, &mut guard);
        (guard, r)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let reply = result?;
    st.store.persist(&guard)?;
    Ok(Json(TurnResponse { reply, session: st.engine.view(&guard) }))
}

async fn post_message(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Json<TurnResponse>, ApiError> {
    let req: PostMessage = parse_body(&body)?;
    let text = req.text.ok_or_else(|| ApiError::bad_request("missing field `text`"))?;
    turn(st, id, move |e, s| e.submit_message(s, &text)).await
}

async fn switch_flowchart(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Json<TurnResponse>, ApiError> {
    let req: SwitchRequest = parse_body(&body)?;
    let target = req.flowchart_id.ok_or_else(|| ApiError::bad_request("missing field `flowchart_id`"))?;
    turn(st, id, move |e, s| e.switch_flowchart(s, &target)).await
}

async fn list_flowcharts(State(st): State<Arc<AppState>>) -> Json<Vec<FlowchartSummary>> {
    Json(
        st.engine
            .library
            .iter()
            .map(|c| FlowchartSummary { id: c.id.clone(), name: c.name.clone(), specialty: c.specialty.clone(), applicability: c.applicability.clone() })
            .collect(),
    )
}

async fn get_flowchart(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let chart = st.engine.library.get(&id).ok_or_else(|| ApiError::not_found("flowchart", &id))?;
    Ok(Json(to_document_value(chart)))
}

async fn validate_flowchart(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let chart = parse_flowchart(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(validate(&chart, &st.engine.library)).into_response())
}

/// Healthy when the library is loaded and the embedder answers.
async fn healthz(State(st): State<Arc<AppState>>) -> Response {
    let engine = st.engine.clone();
    let probe = tokio::task::spawn_blocking(move || engine.retriever.embedder.embed(&["health check".to_string()]).map(|_| ())).await;
    let body = |status: &str| {
        json!({
            "status": status,
            "flowcharts": st.engine.library.len(),
            "embedder": st.engine.retriever.embedder.id(),
            "selector": st.engine.retriever.selector.name(),
            "classifier": st.engine.classifier.name(),
        })
    };
    match probe {
        Ok(Ok(())) if !st.engine.library.is_empty() => (StatusCode::OK, Json(body("ok"))).into_response(),
        _ => (StatusCode::SERVICE_UNAVAILABLE, Json(body("unavailable"))).into_response(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("loading library: {0}")]
    Library(#[from] triage_core::flowchart::LibraryError),
    #[error("library has {0} validation error(s); refusing to serve")]
    InvalidLibrary(usize),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Builds the shared state described by `config`. Blocking: may contact the provider.
pub fn build_state(config: &ServiceConfig) -> Result<Arc<AppState>, ServiceError> {
    let (library, report) = load_library(&config.library_dir)?;
    if !report.is_clean() {
        for issue in &report.errors {
            log::error!("{issue}");
        }
        return Err(ServiceError::InvalidLibrary(report.errors.len()));
    }
    let provider = provider_from_env(config.provider_file.as_deref()).map_err(StackError::from)?;
    let engine = build_engine(Arc::new(library), config.engine_config(), provider.as_ref())?;
    let store = match config.store {
        StoreMode::Memory => SessionStore::memory(config.idle_expiry()),
        StoreMode::FileSnapshot => SessionStore::file_snapshot(config.snapshot_dir.as_deref().expect("checked by config"), config.idle_expiry())?,
    };
    Ok(AppState::new(engine, store))
}

/// Serves until interrupted, sweeping idle sessions once a minute.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let cfg = config.clone();
    let state = tokio::task::spawn_blocking(move || build_state(&cfg)).await.expect("state builder panicked")?;
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.store.sweep();
            if n > 0 {
                log::info!("expired {n} idle session(s)");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(&config.listen_addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
