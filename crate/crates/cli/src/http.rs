//! The versioned HTTP API over a [`DesignService`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use layoutgen::service::{BoxEdit, CandidateRecord, DesignService, ForegroundRequest};
use layoutgen::Error;
use serde::Deserialize;
use serde_json::{json, Value};

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Conflict(_) => StatusCode::CONFLICT,
        Error::Validation(_) | Error::Dimension(_) | Error::Image(_) | Error::Json(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_for(&self.0), Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(Error::Validation(msg.into()))
}

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(
    svc: &Arc<DesignService>,
    f: impl FnOnce(&DesignService) -> layoutgen::Result<T> + Send + 'static,
) -> ApiResult<T> {
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(Error::Io(std::io::Error::other(e.to_string()))))?
        .map_err(ApiError)
}

/// JSON bodies whose parse failures become 422 responses with our error shape.
struct Body<T>(T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| bad_request(e.to_string()))?;
        serde_json::from_slice(&bytes).map(Body).map_err(|e| bad_request(format!("invalid JSON body: {e}")))
    }
}

pub fn router(service: Arc<DesignService>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/background", put(put_background))
        .route("/v1/sessions/{id}/foreground", put(put_foreground))
        .route("/v1/sessions/{id}/candidates", post(candidates))
        .route("/v1/sessions/{id}/select", post(select))
        .route("/v1/sessions/{id}/layout", patch(edit_layout))
        .route("/v1/sessions/{id}/export", post(export))
        .route("/v1/blobs/{sha}", get(blob))
        .with_state(service)
}

fn blob_url(sha: &str) -> String {
    format!("/v1/blobs/{sha}")
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(State(svc): State<Arc<DesignService>>) -> ApiResult<(StatusCode, Json<Value>)> {
    let s = blocking(&svc, |s| s.create_session()).await?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(s).map_err(Error::from)?)))
}

async fn get_session(State(svc): State<Arc<DesignService>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = blocking(&svc, move |s| s.session(&id)).await?;
    Ok(Json(serde_json::to_value(s).map_err(Error::from)?))
}

/// Accepts a multipart upload (first part with data) or a raw image body.
async fn upload_bytes(headers: &HeaderMap, req: Request) -> ApiResult<Vec<u8>> {
    let is_multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if is_multipart {
        let mut mp = Multipart::from_request(req, &()).await.map_err(|e| bad_request(e.to_string()))?;
        while let Some(field) = mp.next_field().await.map_err(|e| bad_request(e.to_string()))? {
            let data = field.bytes().await.map_err(|e| bad_request(e.to_string()))?;
            if !data.is_empty() {
                return Ok(data.to_vec());
            }
        }
        Err(bad_request("multipart upload has no file part"))
    } else {
        let data = Bytes::from_request(req, &()).await.map_err(|e| bad_request(e.to_string()))?;
        Ok(data.to_vec())
    }
}

async fn put_background(
    State(svc): State<Arc<DesignService>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    req: Request,
) -> ApiResult<Json<Value>> {
    let bytes = upload_bytes(&headers, req).await?;
    let info = blocking(&svc, move |s| s.put_background(&id, &bytes)).await?;
    Ok(Json(json!({
        "sha256": info.sha256,
        "width": info.width,
        "height": info.height,
        "url": blob_url(&info.sha256),
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForegroundBody {
    elements: Vec<ForegroundRequest>,
    #[serde(default)]
    button_radius: Option<u32>,
}

async fn put_foreground(
    State(svc): State<Arc<DesignService>>,
    Path(id): Path<String>,
    Body(body): Body<ForegroundBody>,
) -> ApiResult<Json<Value>> {
    let elements = blocking(&svc, move |s| s.put_foreground(&id, &body.elements, body.button_radius)).await?;
    Ok(Json(json!({ "count": elements.len(), "elements": elements })))
}

#[derive(Deserialize)]
struct CountQuery {
    count: Option<usize>,
}

fn candidate_json(c: &CandidateRecord) -> Value {
    json!({
        "index": c.index,
        "seed": c.seed,
        "boxes": c.layout.to_arrays(),
        "preview": blob_url(&c.preview_sha256),
        "warning": c.warning,
    })
}

async fn candidates(
    State(svc): State<Arc<DesignService>>,
    Path(id): Path<String>,
    Query(q): Query<CountQuery>,
) -> ApiResult<Json<Value>> {
    let list = blocking(&svc, move |s| s.generate_candidates(&id, q.count)).await?;
    Ok(Json(json!({ "candidates": list.iter().map(candidate_json).collect::<Vec<_>>() })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectBody {
    index: usize,
}

async fn select(
    State(svc): State<Arc<DesignService>>,
    Path(id): Path<String>,
    Body(body): Body<SelectBody>,
) -> ApiResult<Json<Value>> {
    let s = blocking(&svc, move |s| s.select(&id, body.index)).await?;
    Ok(Json(json!({ "selected": s.selected })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditBody {
    edits: Vec<BoxEdit>,
}

async fn edit_layout(
    State(svc): State<Arc<DesignService>>,
    Path(id): Path<String>,
    Body(body): Body<EditBody>,
) -> ApiResult<Json<Value>> {
    let layout = blocking(&svc, move |s| s.edit_layout(&id, &body.edits)).await?;
    Ok(Json(json!({ "boxes": layout.to_arrays() })))
}

async fn export(State(svc): State<Arc<DesignService>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let ex = blocking(&svc, move |s| s.export(&id)).await?;
    Ok(Json(json!({
        "image": blob_url(&ex.image_sha256),
        "image_sha256": ex.image_sha256,
        "record": ex.record,
        "warning": ex.warning,
    })))
}

async fn blob(State(svc): State<Arc<DesignService>>, Path(sha): Path<String>) -> ApiResult<Response> {
    let bytes = blocking(&svc, move |s| s.blob(&sha)).await?;
    let kind = if bytes.starts_with(b"\x89PNG") { "image/png" } else { "application/octet-stream" };
    Ok(([(header::CONTENT_TYPE, kind)], bytes).into_response())
}
