//! HTTP API of the live session service.
//!
//! ```text
//! GET    /health
//! POST   /sessions                 SessionConfig -> {session_id}
//! GET    /sessions/{id}            snapshot
//! PATCH  /sessions/{id}            {condition | caption_style}
//! POST   /sessions/{id}/frames     JPEG or PNG body, optional ?ts=<ms>
//! POST   /sessions/{id}/audio      audio chunk
//! GET    /sessions/{id}/events     server-sent events, id = seq
//! DELETE /sessions/{id}
//! GET    /console/...              static console assets
//! ```

use std::collections::VecDeque;
use std::convert::Infallible;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use vgi_core::session::{EventLog, SessionError};
use vgi_core::{Clock, Gateway, SessionConfig, SessionEvent, SessionManager, SessionUpdate};

const BODY_LIMIT: usize = 16 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    manager: Arc<SessionManager>,
    console_dir: Option<Arc<PathBuf>>,
}

impl AppState {
    pub fn new(gateway: Gateway, clock: Arc<dyn Clock>, console_dir: Option<PathBuf>) -> Self {
        Self {
            manager: Arc::new(SessionManager::new(gateway, clock)),
            console_dir: console_dir.map(Arc::new),
        }
    }

    pub fn manager(&self) -> &SessionManager {
        &self.manager
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route(
            "/sessions/{id}",
            get(get_session).patch(update_session).delete(delete_session),
        )
        .route("/sessions/{id}/frames", axum::routing::post(push_frame))
        .route("/sessions/{id}/audio", axum::routing::post(push_audio))
        .route("/sessions/{id}/events", get(events))
        .route("/console", get(console_index))
        .route("/console/{*path}", get(console_asset))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Duplicate(_) => StatusCode::CONFLICT,
            SessionError::InvalidConfig(_) => StatusCode::BAD_REQUEST,
            SessionError::Closed(_) => StatusCode::GONE,
        };
        Self(status, e.to_string())
    }
}

fn bad_json(e: serde_json::Error) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}"))
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "sessions": state.manager.ids().len(),
        "model": state.manager.gateway().config().model_id,
    }))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.manager.ids())
}

/// Bodies are parsed by hand so malformed JSON gets the same error shape as
/// every other failure.
async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let config: SessionConfig = serde_json::from_slice(&body).map_err(bad_json)?;
    let handle = state.manager.create(config)?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": handle.id() }))).into_response())
}

async fn get_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    Ok(Json(state.manager.get(&id)?.snapshot()).into_response())
}

async fn update_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let update: SessionUpdate = serde_json::from_slice(&body).map_err(bad_json)?;
    let handle = state.manager.get(&id)?;
    Ok(Json(handle.update(update).await?).into_response())
}

async fn delete_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    state.manager.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct FrameQuery {
    ts: Option<u64>,
}

async fn push_frame(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<FrameQuery>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    if body.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "empty frame".into()));
    }
    state.manager.get(&id)?.push_frame(body.to_vec(), q.ts).await?;
    Ok(StatusCode::ACCEPTED)
}

async fn push_audio(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    state.manager.get(&id)?.push_audio(body.to_vec()).await?;
    Ok(StatusCode::ACCEPTED)
}

#[derive(Deserialize)]
struct EventsQuery {
    /// Resume point for clients that cannot set `Last-Event-ID`.
    after: Option<u64>,
}

fn sse_event(e: &SessionEvent) -> Event {
    Event::default()
        .id(e.seq.to_string())
        .event(e.body.kind())
        .data(serde_json::to_string(e).expect("event serializes"))
}

/// Replays events after the resume point, then follows the live feed. A
/// subscriber that falls behind re-reads the gap from the history.
fn event_stream(log: Arc<EventLog>, after: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let (backlog, rx) = log.subscribe(after);
    let state = (VecDeque::from(backlog), rx, log, after);
    futures::stream::unfold(state, |(mut pending, mut rx, log, mut last)| async move {
        loop {
            if let Some(e) = pending.pop_front() {
                if e.seq <= last {
                    continue;
                }
                last = e.seq;
                let event = sse_event(&e);
                return Some((Ok(event), (pending, rx, log, last)));
            }
            match rx.recv().await {
                Ok(e) => pending.push_back(e),
                Err(RecvError::Lagged(_)) => pending.extend(log.since(last)),
                Err(RecvError::Closed) => return None,
            }
        }
    })
}

async fn events(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let handle = state.manager.get(&id)?;
    let last_event_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let after = last_event_id.or(q.after).unwrap_or(0);
    let stream = event_stream(handle.events().clone(), after);
    Ok(Sse::new(stream)
        .keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
        .into_response())
}

async fn console_index(State(state): State<AppState>) -> Response {
    serve_asset(&state, "index.html").await
}

async fn console_asset(State(state): State<AppState>, UrlPath(path): UrlPath<String>) -> Response {
    let path = if path.is_empty() || path.ends_with('/') {
        format!("{path}index.html")
    } else {
        path
    };
    serve_asset(&state, &path).await
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

async fn serve_asset(state: &AppState, relative: &str) -> Response {
    let Some(root) = &state.console_dir else {
        return ApiError(StatusCode::NOT_FOUND, "console assets not configured".into()).into_response();
    };
    let rel = Path::new(relative);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return ApiError(StatusCode::NOT_FOUND, "not found".into()).into_response();
    }
    let full = root.join(rel);
    match tokio::fs::read(&full).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&full))], bytes).into_response(),
        Err(_) => ApiError(StatusCode::NOT_FOUND, "not found".into()).into_response(),
    }
}
