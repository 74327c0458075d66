//! HTTP/JSON service.
//!
//! | method | path | body | success |
//! |---|---|---|---|
//! | POST | `/sessions` | `{text, config?}` | 201 `{session_id, version_id}` |
//! | GET | `/sessions/{id}` | | session view |
//! | POST | `/sessions/{id}/edits` | `{base_version, edits}` | `{version_id, anchor_statuses}` |
//! | POST | `/sessions/{id}/snapshots` | `{text}` | snapshot outcome |
//! | POST | `/sessions/{id}/events` | clipboard event | the recorded event |
//! | POST | `/sessions/{id}/meta-queries` | `{query}` | query result with created threads |
//! | POST | `/sessions/{id}/threads` | `{span?, message}` | 201 thread |
//! | GET | `/threads/{tid}` | | thread |
//! | POST | `/threads/{tid}/messages` | `{message}` | AI message |
//! | GET | `/sessions/{id}/metrics` | | revision metrics |
//!
//! Every success body carries `head_version_id`; every failure body is one
//! [`ApiError`].

pub mod config;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::doc::{DocError, Edit, Span, VersionId};
use crate::llm::Provider;
use crate::pipeline::{self, PipelineError};
use crate::session::{EventBody, Session, SessionConfig, SessionError, SessionStore};
use crate::thread::CommentThread;
pub use config::ServiceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    FeatureDisabled,
    ProviderError,
    Conflict,
    Unauthorized,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::FeatureDisabled => StatusCode::FORBIDDEN,
            ErrorCode::ProviderError => StatusCode::BAD_GATEWAY,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_version_id: Option<VersionId>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), detail: Value::Null, head_version_id: None }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn at_head(mut self, head: VersionId) -> Self {
        self.head_version_id = Some(head);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::VersionMismatch { .. } | SessionError::Locked(_) | SessionError::OutOfOrder { .. } => {
                ErrorCode::Conflict
            }
            SessionError::NotFound(_) => ErrorCode::NotFound,
            SessionError::UnknownVersion(_) | SessionError::Doc(_) => ErrorCode::BadRequest,
            SessionError::StorageFailure(_) | SessionError::Corrupt(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e {
            PipelineError::FeatureDisabled(_) => ApiError::new(ErrorCode::FeatureDisabled, message),
            PipelineError::ThreadNotFound(_) => ApiError::new(ErrorCode::NotFound, message),
            PipelineError::Provider(p) => ApiError::new(ErrorCode::ProviderError, message)
                .with_detail(serde_json::to_value(p).unwrap_or(Value::Null)),
            PipelineError::Schema(s) => ApiError::new(ErrorCode::ProviderError, message)
                .with_detail(serde_json::to_value(s).unwrap_or(Value::Null)),
            PipelineError::Session(s) => s.into(),
            PipelineError::Doc(_) | PipelineError::Anchor(_) => ApiError::new(ErrorCode::BadRequest, message),
        }
    }
}

type Shared = Arc<Mutex<Session>>;

/// Shared service state. Sessions are locked individually, so different
/// sessions proceed in parallel while writes to one session serialize.
pub struct AppState {
    store: Option<SessionStore>,
    sessions: Mutex<HashMap<String, Shared>>,
    provider: Arc<dyn Provider>,
    bearer_token: Option<String>,
}

impl AppState {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        AppState { store: None, sessions: Mutex::new(HashMap::new()), provider, bearer_token: None }
    }

    pub fn with_store(mut self, store: SessionStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.bearer_token = token;
        self
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        let mut map = self.sessions.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        let store = self.store.as_ref().ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("session {id} not found")))?;
        let session = Arc::new(Mutex::new(store.open(id)?));
        map.insert(id.to_owned(), session.clone());
        Ok(session)
    }

    fn insert(&self, session: Session) -> Result<(String, VersionId), ApiError> {
        let session = match &self.store {
            Some(store) => store.insert(session)?,
            None => session,
        };
        let id = session.session_id().to_owned();
        let head = session.head().version_id();
        self.sessions.lock().unwrap_or_else(|p| p.into_inner()).insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok((id, head))
    }
}

/// Runs `f` on the blocking pool with the session locked. Provider calls may
/// block for a long time, so they never run on the async workers.
async fn with_session<T, F>(state: Arc<AppState>, id: String, f: F) -> Result<Json<Value>, ApiError>
where
    T: Serialize + Send + 'static,
    F: FnOnce(&mut Session, &dyn Provider) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let shared = state.session(&id)?;
        let mut session = shared.lock().unwrap_or_else(|p| p.into_inner());
        let result = f(&mut session, state.provider.as_ref());
        let head = session.head().version_id();
        match result {
            Ok(v) => Ok(Json(with_head(v, head))),
            Err(e) => Err(e.at_head(head)),
        }
    })
    .await
    .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

fn with_head<T: Serialize>(value: T, head: VersionId) -> Value {
    match serde_json::to_value(value) {
        Ok(Value::Object(mut map)) => {
            map.insert("head_version_id".into(), head.into());
            Value::Object(map)
        }
        Ok(other) => json!({"data": other, "head_version_id": head}),
        Err(e) => json!({"error": e.to_string(), "head_version_id": head}),
    }
}

/// Parses a JSON body, reporting every failure as a `bad_request` ApiError.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let text = std::str::from_utf8(body).map_err(|e| {
        ApiError::new(ErrorCode::BadRequest, DocError::InvalidEncoding(e.to_string()).to_string())
    })?;
    serde_json::from_str(text).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid request body: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    text: String,
    #[serde(default)]
    config: Option<SessionConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    base_version: VersionId,
    #[serde(default)]
    edits: Vec<Edit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotRequest {
    text: String,
}

#[derive(Debug, Deserialize)]
struct EventRequest {
    #[serde(default)]
    timestamp: Option<DateTime<Utc>>,
    #[serde(flatten)]
    body: EventBody,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    query: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThreadRequest {
    #[serde(default)]
    span: Option<Span>,
    message: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageRequest {
    message: String,
}

#[derive(Debug, Serialize)]
struct SessionView<'a> {
    session_id: &'a str,
    text: &'a str,
    config: &'a SessionConfig,
    cached_version_id: VersionId,
    threads: &'a [CommentThread],
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let (session_id, version_id) = tokio::task::spawn_blocking(move || state.insert(Session::open(&req.text, req.config.unwrap_or_default())))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))??;
    let body = json!({"session_id": session_id, "version_id": version_id, "head_version_id": version_id});
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    with_session(state, id, |s, _| {
        let view = SessionView {
            session_id: s.session_id(),
            text: s.head().text(),
            config: s.config(),
            cached_version_id: s.cached_version_id(),
            threads: s.threads(),
        };
        serde_json::to_value(view).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))
    })
    .await
}

async fn post_edits(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: EditRequest = parse_body(&body)?;
    with_session(state, id, move |s, _| {
        let head = s.head().version_id();
        pipeline::apply_edits(s, req.base_version, &req.edits).map_err(|e| {
            let stale = matches!(e, PipelineError::Session(SessionError::VersionMismatch { .. }));
            let err = ApiError::from(e);
            if stale {
                err.with_detail(json!({"base_version": req.base_version, "head_version_id": head}))
            } else {
                err
            }
        })
    })
    .await
}

async fn post_snapshot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: SnapshotRequest = parse_body(&body)?;
    with_session(state, id, move |s, _| Ok(pipeline::record_snapshot(s, &req.text)?)).await
}

async fn post_event(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: EventRequest = parse_body(&body)?;
    if !matches!(req.body, EventBody::Copy(_) | EventBody::Paste(_)) {
        return Err(ApiError::new(ErrorCode::BadRequest, "only copy and paste events may be posted"));
    }
    with_session(state, id, move |s, _| Ok(pipeline::record_clipboard(s, req.body, req.timestamp)?)).await
}

async fn post_meta_query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: QueryRequest = parse_body(&body)?;
    with_session(state, id, move |s, provider| {
        let result = pipeline::run_meta_query(s, provider, &req.query)?;
        let threads: Vec<&CommentThread> =
            result.created_threads.iter().filter_map(|tid| s.thread(tid)).collect();
        let mut value = serde_json::to_value(&result).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
        value["threads"] = serde_json::to_value(threads).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
        Ok(value)
    })
    .await
}

async fn post_thread(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: ThreadRequest = parse_body(&body)?;
    let json = with_session(state, id, move |s, provider| {
        Ok(pipeline::create_user_thread(s, provider, req.span, &req.message)?)
    })
    .await?;
    Ok((StatusCode::CREATED, json).into_response())
}

/// Thread ids are `<session_id>-t<n>`.
fn session_of(thread_id: &str) -> Result<String, ApiError> {
    thread_id
        .rsplit_once("-t")
        .filter(|(sid, n)| !sid.is_empty() && !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
        .map(|(sid, _)| sid.to_owned())
        .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("thread {thread_id} not found")))
}

async fn get_thread(State(state): State<Arc<AppState>>, Path(tid): Path<String>) -> Result<Json<Value>, ApiError> {
    let sid = session_of(&tid)?;
    with_session(state, sid, move |s, _| {
        s.thread(&tid).cloned().ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("thread {tid} not found")))
    })
    .await
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(tid): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: MessageRequest = parse_body(&body)?;
    let sid = session_of(&tid)?;
    with_session(state, sid, move |s, provider| {
        let message = pipeline::reply_in_thread(s, provider, &tid, &req.message)?;
        let thread = s.thread(&tid).cloned();
        Ok(json!({"message": message, "thread": thread}))
    })
    .await
}

async fn get_metrics(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    with_session(state, id, |s, _| {
        let initial = s.history()[0].text();
        Ok(crate::metrics::compute(s.events(), initial, s.head().text()))
    })
    .await
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.bearer_token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(ErrorCode::Unauthorized, "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

async fn fallback() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/edits", post(post_edits))
        .route("/sessions/:id/snapshots", post(post_snapshot))
        .route("/sessions/:id/events", post(post_event))
        .route("/sessions/:id/meta-queries", post(post_meta_query))
        .route("/sessions/:id/threads", post(post_thread))
        .route("/sessions/:id/metrics", get(get_metrics))
        .route("/threads/:tid", get(get_thread))
        .route("/threads/:tid/messages", post(post_message))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(listen: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
