//! JSON error responses shared by both HTTP servers.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use tzr_core::Error;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: message.into(),
        }
    }
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::Frame { source, .. } => status_of(source),
        Error::InvalidParams(_)
        | Error::DimensionMismatch { .. }
        | Error::DegenerateEmbedding
        | Error::EmptyCrop(_)
        | Error::EmptyPairs
        | Error::Image(_) => StatusCode::BAD_REQUEST,
        Error::MissingFrame(_) => StatusCode::NOT_FOUND,
        Error::Encoder(m) if m.starts_with("invalid base64") => StatusCode::BAD_REQUEST,
        Error::Encoder(_) => StatusCode::BAD_GATEWAY,
        Error::EmptyIndex => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self {
            status: status_of(&e),
            message: e.to_string(),
        }
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: format!("worker failed: {e}"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

pub type ApiResult<T> = Result<Json<T>, ApiError>;

/// Run blocking work (encoder calls, index scans) off the async executor.
pub async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await?.map(Json)
}
