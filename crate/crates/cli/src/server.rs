//! HTTP API over a [`Service`].
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/captures` | multipart, field `file` | `{session_id, skipped}` |
//! | GET | `/sessions` | | `{entries, latest}` |
//! | POST | `/sessions/{id}/query` | `{question, mode}` | `{answer, evidence}` |
//! | GET | `/sessions/{id}/report` | | enriched report, `text/plain` |
//! | GET | `/healthz` | | `{status, offline}` |
//!
//! Errors are `{"error": message}` with 400, 404, 413 or 500; 503 adds
//! `"client"` naming the unavailable dependency.

use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::service::{parse_mode, Service, ServiceError};

pub const DEFAULT_MAX_UPLOAD: usize = 256 * 1024 * 1024;

#[derive(Clone)]
struct AppState {
    svc: Arc<Service>,
    max_upload: usize,
}

struct ApiError(StatusCode, ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::BadInput(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Unavailable { .. } => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match &self.1 {
            ServiceError::Unavailable { client, .. } => json!({"error": self.1.to_string(), "client": client}),
            e => json!({"error": e.to_string()}),
        };
        (self.0, Json(body)).into_response()
    }
}

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, ServiceError::BadInput(msg.into()))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, ServiceError::Internal(e.to_string())))?
        .map_err(ApiError::from)
}

async fn healthz(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "offline": st.svc.config().offline}))
}

async fn sessions(State(st): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let svc = st.svc.clone();
    let idx = blocking(move || svc.sessions()).await?;
    Ok(Json(json!(idx)))
}

#[derive(Serialize)]
struct UploadResponse {
    session_id: String,
    skipped: bool,
}

async fn upload(
    State(st): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<UploadResponse>, ApiError> {
    let mut multipart = multipart.map_err(|e| bad(format!("expected a multipart upload: {e}")))?;
    let mut stored = None;
    while let Some(mut field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError(e.status(), ServiceError::BadInput(e.body_text())))?
    {
        if field.name() != Some("file") && field.file_name().is_none() {
            continue;
        }
        let mut tmp = tempfile::NamedTempFile::new()
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, ServiceError::Internal(e.to_string())))?;
        let mut hasher = Sha256::new();
        let mut size = 0usize;
        while let Some(chunk) = field
            .chunk()
            .await
            .map_err(|e| ApiError(e.status(), ServiceError::BadInput(e.body_text())))?
        {
            size += chunk.len();
            if size > st.max_upload {
                return Err(ApiError(
                    StatusCode::PAYLOAD_TOO_LARGE,
                    ServiceError::BadInput(format!("upload exceeds {} bytes", st.max_upload)),
                ));
            }
            hasher.update(&chunk);
            tmp.write_all(&chunk)
                .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, ServiceError::Internal(e.to_string())))?;
        }
        log::info!("received upload: {size} bytes, sha256 {}", hex::encode(hasher.finalize()));
        stored = Some(tmp);
        break;
    }
    let tmp = stored.ok_or_else(|| bad("multipart body has no \"file\" field"))?;
    let svc = st.svc.clone();
    let outcome = blocking(move || svc.ingest(tmp.path())).await?;
    Ok(Json(UploadResponse {
        session_id: outcome.session_id,
        skipped: outcome.reused,
    }))
}

#[derive(Deserialize)]
struct QueryRequest {
    question: String,
    #[serde(default)]
    mode: Option<String>,
}

async fn query(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req: QueryRequest = serde_json::from_slice(&body).map_err(|e| bad(format!("malformed query body: {e}")))?;
    let mode = parse_mode(req.mode.as_deref().unwrap_or("hybrid"))?;
    let svc = st.svc.clone();
    let (answer, evidence) = blocking(move || svc.query(&id, &req.question, mode)).await?;
    Ok(Json(json!({"answer": answer, "evidence": evidence})))
}

async fn report(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let svc = st.svc.clone();
    let text = blocking(move || svc.report(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

pub fn router(svc: Arc<Service>, max_upload: usize) -> Router {
    let st = AppState { svc, max_upload };
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", get(sessions))
        .route(
            "/captures",
            post(upload).layer(DefaultBodyLimit::max(max_upload.saturating_add(64 * 1024))),
        )
        .route("/sessions/:id/query", post(query))
        .route("/sessions/:id/report", get(report))
        .with_state(st)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: Arc<Service>,
    max_upload: usize,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(svc, max_upload))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `addr` and serves until Ctrl-C.
pub fn run_blocking(addr: SocketAddr, svc: Arc<Service>, max_upload: usize) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(listener, svc, max_upload, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}
