//! HTTP routes. Long-running operations answer `202 Accepted` with a job
//! that can be polled at `/jobs/{id}`.

use crate::service::{Service, ServiceError};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use reauthor_core::{StoppingPolicy, ValidationError};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use std::sync::Arc;

/// Seconds a client should wait before retrying after a 503.
const RETRY_AFTER_SECS: u64 = 5;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::UnsupportedMedia(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            ServiceError::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Unavailable(_) | ServiceError::ShuttingDown => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = match &self {
            ServiceError::Validation(v) => json!({ "error": self.to_string(), "field": v.field, "reason": v.reason }),
            _ => json!({ "error": self.to_string() }),
        };
        let mut resp = (status, Json(body)).into_response();
        if status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECS));
        }
        resp
    }
}

type ApiResult = Result<Response, ServiceError>;

/// Runs blocking service work off the async executor.
async fn blocking<T, F>(svc: &Arc<Service>, f: F) -> Result<T, ServiceError>
where
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ValidationError::new("body", e.to_string()).into())
}

fn ok(value: impl serde::Serialize) -> ApiResult {
    Ok(Json(value).into_response())
}

fn accepted(value: serde_json::Value) -> ApiResult {
    Ok((StatusCode::ACCEPTED, Json(value)).into_response())
}

pub fn router(service: Arc<Service>, max_upload_bytes: usize) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/clips", post(upload_clip))
        .route("/clips/{id}", get(get_clip))
        .route("/media/{digest}", get(get_media))
        .route("/jobs/{id}", get(get_job))
        .route("/reconstructions", post(create_reconstruction))
        .route("/reconstructions/{id}", get(get_reconstruction))
        .route("/reconstructions/{id}/resume", post(resume_reconstruction))
        .route("/rewrites", post(create_rewrite))
        .route("/rewrites/{id}", get(get_rewrite))
        .route("/rewrites/{id}/prompt", put(edit_prompt))
        .route("/rewrites/{id}/assist", post(assist))
        .route("/rewrites/{id}/adopt", post(adopt))
        .route("/rewrites/{id}/first-frame", post(first_frame))
        .route("/rewrites/{id}/first-frame/revert", post(revert_first_frame))
        .route("/rewrites/{id}/versions", post(generate_version).get(list_versions))
        .route("/rewrites/{id}/versions/{a}/compare/{b}", get(compare_versions))
        // Leave room for multipart framing around the largest allowed file.
        .layer(DefaultBodyLimit::max(max_upload_bytes.saturating_add(64 * 1024)))
        .with_state(service)
}

/// Accepts either a multipart form (first file field) or the raw bytes.
async fn upload_clip(State(svc): State<Arc<Service>>, req: Request) -> ApiResult {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let bytes = if is_multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ValidationError::new("body", e.body_text()))?;
        let field = form
            .next_field()
            .await
            .map_err(|e| ValidationError::new("body", e.body_text()))?
            .ok_or_else(|| ValidationError::new("file", "multipart body has no file"))?;
        field.bytes().await.map_err(|e| ValidationError::new("file", e.body_text()))?
    } else {
        Bytes::from_request(req, &())
            .await
            .map_err(|e| ValidationError::new("body", e.body_text()))?
    };
    let (clip, created) = blocking(&svc, move |s| s.store_clip(&bytes)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(clip)).into_response())
}

async fn get_clip(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.clip(&id)).await?)
}

async fn get_media(State(svc): State<Arc<Service>>, Path(digest): Path<String>) -> ApiResult {
    let bytes = blocking(&svc, move |s| s.media(&digest)).await?;
    let mime = if bytes.starts_with(b"\x89PNG") {
        "image/png"
    } else {
        "application/octet-stream"
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes.as_ref().clone()).into_response())
}

async fn get_job(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.job(&id)).await?)
}

#[derive(Deserialize)]
struct ReconstructionRequest {
    clip_id: String,
    #[serde(default)]
    policy: Option<StoppingPolicy>,
}

async fn create_reconstruction(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult {
    let req: ReconstructionRequest = parse(&body)?;
    let policy = req.policy.unwrap_or_default();
    let (session, job) = blocking(&svc, move |s| s.create_reconstruction(&req.clip_id, policy)).await?;
    accepted(json!({ "session_id": session.id(), "job": job }))
}

async fn get_reconstruction(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.reconstruction(&id)).await?)
}

async fn resume_reconstruction(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    let job = blocking(&svc, move |s| s.resume_reconstruction(&id)).await?;
    accepted(json!({ "job": job }))
}

#[derive(Deserialize)]
struct RewriteRequest {
    clip_id: String,
}

async fn create_rewrite(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult {
    let req: RewriteRequest = parse(&body)?;
    let (rewrite_id, reconstruction_id, job) = blocking(&svc, move |s| s.create_rewrite(&req.clip_id)).await?;
    accepted(json!({ "rewrite_id": rewrite_id, "reconstruction_id": reconstruction_id, "job": job }))
}

async fn get_rewrite(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.rewrite(&id)).await?)
}

#[derive(Deserialize)]
struct PromptRequest {
    text: String,
}

async fn edit_prompt(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: PromptRequest = parse(&body)?;
    ok(blocking(&svc, move |s| s.edit_prompt(&id, &req.text)).await?)
}

#[derive(Deserialize)]
struct GoalRequest {
    goal: String,
}

async fn assist(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: GoalRequest = parse(&body)?;
    let job = blocking(&svc, move |s| s.request_assist(&id, &req.goal)).await?;
    accepted(json!({ "job": job }))
}

#[derive(Deserialize)]
struct AdoptRequest {
    chat_index: usize,
}

async fn adopt(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: AdoptRequest = parse(&body)?;
    ok(blocking(&svc, move |s| s.adopt_suggestion(&id, req.chat_index)).await?)
}

async fn first_frame(State(svc): State<Arc<Service>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: GoalRequest = parse(&body)?;
    let job = blocking(&svc, move |s| s.request_first_frame(&id, &req.goal)).await?;
    accepted(json!({ "job": job }))
}

async fn revert_first_frame(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.revert_first_frame(&id)).await?)
}

async fn generate_version(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    let job = blocking(&svc, move |s| s.generate_version(&id)).await?;
    accepted(json!({ "job": job }))
}

async fn list_versions(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult {
    ok(blocking(&svc, move |s| s.versions(&id)).await?)
}

async fn compare_versions(
    State(svc): State<Arc<Service>>,
    Path((id, a, b)): Path<(String, String, String)>,
) -> ApiResult {
    let index = |v: &str| {
        v.parse::<u32>()
            .map_err(|_| ServiceError::NotFound(format!("version {v}")))
    };
    let (a, b) = (index(&a)?, index(&b)?);
    ok(blocking(&svc, move |s| s.compare_versions(&id, a, b)).await?)
}
