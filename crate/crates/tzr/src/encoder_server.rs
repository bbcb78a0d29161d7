//! Serves any [`EncoderClient`] over the encoder wire protocol.

use std::sync::Arc;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use tzr_core::encoder::protocol::{
    serve, EncodeImageBatchRequest, EncodeImageBatchResponse, EncodeImageRequest, EncodeImageResponse,
    EncodeTextRequest, EncodeTextResponse, InfoResponse,
};
use tzr_core::EncoderClient;

use crate::http_error::{blocking, ApiError, ApiResult};

type Enc = Arc<dyn EncoderClient>;

/// Protocol routes. With `batch` false the batch endpoint is left out, as a
/// minimal remote encoder would do.
pub fn router(encoder: Enc, batch: bool) -> Router {
    let mut r = Router::new()
        .route("/info", get(info))
        .route("/encode_image", post(encode_image))
        .route("/encode_text", post(encode_text));
    if batch {
        r = r.route("/encode_image_batch", post(encode_image_batch));
    }
    r.with_state(encoder)
}

async fn info(State(enc): State<Enc>) -> ApiResult<InfoResponse> {
    blocking(move || Ok(serve::info(enc.as_ref())?)).await
}

async fn encode_image(State(enc): State<Enc>, Json(req): Json<EncodeImageRequest>) -> ApiResult<EncodeImageResponse> {
    blocking(move || Ok(serve::encode_image(enc.as_ref(), &req)?)).await
}

async fn encode_image_batch(
    State(enc): State<Enc>,
    Json(req): Json<EncodeImageBatchRequest>,
) -> ApiResult<EncodeImageBatchResponse> {
    blocking(move || Ok(serve::encode_image_batch(enc.as_ref(), &req)?)).await
}

async fn encode_text(State(enc): State<Enc>, Json(req): Json<EncodeTextRequest>) -> ApiResult<EncodeTextResponse> {
    if req.text.trim().is_empty() {
        return Err(ApiError::bad_request("text must be nonempty"));
    }
    blocking(move || Ok(serve::encode_text(enc.as_ref(), &req)?)).await
}
