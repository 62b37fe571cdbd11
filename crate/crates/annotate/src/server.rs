//! HTTP front end. Reads share the store lock; label submissions take the
//! write side, so one writer appends to the journal at a time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pillar::evaluation::StanceLabel;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::clock::Clock;
use crate::error::{AnnotateError, Result};
use crate::store::{AnnotationTask, Quota, Store};

/// Bearer tokens and where the UI bundle lives.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AccessConfig {
    /// Token to annotator id.
    pub tokens: BTreeMap<String, String>,
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
}

impl AccessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read(path).map_err(|e| AnnotateError::io(path, e))?;
        let cfg: AccessConfig =
            serde_json::from_slice(&body).map_err(|e| AnnotateError::Config(format!("{}: {e}", path.display())))?;
        if cfg.tokens.is_empty() {
            return Err(AnnotateError::Config("no annotator tokens".into()));
        }
        Ok(cfg)
    }
}

pub struct AppState {
    pub store: RwLock<Store>,
    pub tokens: BTreeMap<String, String>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(store: Store, tokens: BTreeMap<String, String>, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(AppState {
            store: RwLock::new(store),
            tokens,
            clock,
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Option<(&'static str, Value)>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            extra: None,
        }
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        let message = e.to_string();
        match e {
            AnnotateError::UnknownTask(_) | AnnotateError::UnknownBatch(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
            }
            AnnotateError::WrongAnnotator { .. } => ApiError::new(StatusCode::FORBIDDEN, "wrong_annotator", message),
            AnnotateError::AlreadyLabeled(_) => ApiError::new(StatusCode::CONFLICT, "already_labeled", message),
            AnnotateError::DailyCap { resets_at, .. } => ApiError {
                extra: Some(("resets_at", json!(resets_at))),
                ..ApiError::new(StatusCode::TOO_MANY_REQUESTS, "daily_cap", message)
            },
            AnnotateError::Unfinished(pairs) => ApiError {
                extra: Some(("pairs", json!(pairs))),
                ..ApiError::new(StatusCode::CONFLICT, "unfinished", message)
            },
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.message, "code": self.code});
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn identify(state: &AppState, headers: &HeaderMap) -> ApiResult<String> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    token
        .and_then(|t| state.tokens.get(t))
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token"))
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

/// The caller, who must match `?annotator=` when it is given.
fn caller(state: &AppState, headers: &HeaderMap, asked: Option<String>) -> ApiResult<String> {
    let who = identify(state, headers)?;
    match asked {
        Some(a) if a != who => Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "wrong_annotator",
            format!("token belongs to `{who}`, not `{a}`"),
        )),
        _ => Ok(who),
    }
}

#[derive(Serialize)]
struct NextResponse {
    task: Option<AnnotationTask>,
    quota: Quota,
}

async fn next_task(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<AnnotatorQuery>,
) -> ApiResult<Json<NextResponse>> {
    let who = caller(&state, &headers, q.annotator)?;
    let now = state.clock.now();
    let store = state.store.read().expect("store lock");
    let task = store.next_task(&who, now)?;
    Ok(Json(NextResponse {
        task,
        quota: store.quota(&who, now),
    }))
}

async fn next_adjudication(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<AnnotatorQuery>,
) -> ApiResult<Json<NextResponse>> {
    let who = caller(&state, &headers, q.annotator)?;
    let now = state.clock.now();
    let store = state.store.read().expect("store lock");
    let task = store.next_adjudication(&who, now)?;
    Ok(Json(NextResponse {
        task,
        quota: store.quota(&who, now),
    }))
}

#[derive(Deserialize)]
struct LabelBody {
    label: Value,
}

async fn submit_label(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(task_id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let who = identify(&state, &headers)?;
    let body: LabelBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", format!("expected {{\"label\": ...}}: {e}")))?;
    let label: StanceLabel = serde_json::from_value(body.label.clone()).map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_label",
            format!("label must be True, False or CannotAnswer, got {}", body.label),
        )
    })?;
    let now = state.clock.now();
    let mut store = state.store.write().expect("store lock");
    let outcome = store.submit_label(&task_id, &who, label, now)?;
    let quota = store.quota(&who, now);
    let mut out = serde_json::to_value(outcome).expect("outcome serializes");
    out["quota"] = json!(quota);
    Ok(Json(out))
}

async fn progress(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    let who = identify(&state, &headers)?;
    let now = state.clock.now();
    let store = state.store.read().expect("store lock");
    let mut out = serde_json::to_value(store.progress(now)).expect("progress serializes");
    out["quota"] = json!(store.quota(&who, now));
    Ok(Json(out))
}

#[derive(Deserialize)]
struct ExportQuery {
    batch: Option<String>,
}

async fn export(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Json<Value>> {
    identify(&state, &headers)?;
    let store = state.store.read().expect("store lock");
    let batch = match q.batch {
        Some(b) => b,
        None => {
            let batches = store.batches();
            match batches.as_slice() {
                [only] => only.clone(),
                [] => return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", "no batches")),
                _ => {
                    return Err(ApiError::new(
                        StatusCode::BAD_REQUEST,
                        "batch_required",
                        format!("several batches exist: {}", batches.join(", ")),
                    ))
                }
            }
        }
    };
    let report = store.export_gold(&batch)?;
    let mut out = serde_json::to_value(&report).expect("report serializes");
    out["gold_jsonl"] = json!(report.gold_jsonl());
    Ok(Json(out))
}

const PLACEHOLDER: &str = "<!doctype html><meta charset=\"utf-8\"><title>Annotation</title>\
<p>No UI bundle is configured. The JSON API lives under /tasks, /adjudication, /progress and /export.</p>";

pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/label", post(submit_label))
        .route("/adjudication/next", get(next_adjudication))
        .route("/progress", get(progress))
        .route("/export", get(export))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
