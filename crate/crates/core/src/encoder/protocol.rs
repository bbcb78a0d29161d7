//! JSON bodies of the encoder HTTP protocol.
//!
//! `GET /info`, `POST /encode_image`, `POST /encode_image_batch`,
//! `POST /encode_text`. Images travel as base64-encoded PNG or JPEG bytes.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{EncodeImageResult, EncoderClient, EncoderInfo};
use crate::attention::AttentionMap;
use crate::embedding::accept_unit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub name: String,
    pub dim: usize,
    pub input_resolution: u32,
    pub attention_rows: u32,
    pub attention_cols: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeImageRequest {
    pub image_b64: String,
    #[serde(default)]
    pub want_attention: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireAttention {
    pub rows: u32,
    pub cols: u32,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeImageResponse {
    pub embedding: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<WireAttention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeImageBatchRequest {
    pub images: Vec<EncodeImageRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeImageBatchResponse {
    pub results: Vec<EncodeImageResponse>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeTextRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeTextResponse {
    pub embedding: Vec<f32>,
}

impl From<EncoderInfo> for InfoResponse {
    fn from(i: EncoderInfo) -> Self {
        Self {
            name: i.name,
            dim: i.dim,
            input_resolution: i.input_resolution,
            attention_rows: i.attention_rows,
            attention_cols: i.attention_cols,
        }
    }
}

impl From<InfoResponse> for EncoderInfo {
    fn from(i: InfoResponse) -> Self {
        Self {
            name: i.name,
            dim: i.dim,
            input_resolution: i.input_resolution,
            attention_rows: i.attention_rows,
            attention_cols: i.attention_cols,
        }
    }
}

impl From<EncodeImageResult> for EncodeImageResponse {
    fn from(r: EncodeImageResult) -> Self {
        Self {
            embedding: r.embedding.into_vec(),
            attention: r.attention.map(|a| WireAttention {
                rows: a.height(),
                cols: a.width(),
                values: a.values().to_vec(),
            }),
        }
    }
}

impl EncodeImageResponse {
    /// Validate and convert a wire response; embeddings are renormalized.
    pub fn into_result(self, want_attention: bool) -> Result<EncodeImageResult> {
        let embedding = accept_unit(self.embedding)?;
        let attention = match (self.attention, want_attention) {
            (Some(a), true) => Some(AttentionMap::new(a.cols, a.rows, a.values)?),
            (None, true) => return Err(Error::Encoder("attention requested but not returned".into())),
            (_, false) => None,
        };
        Ok(EncodeImageResult { embedding, attention })
    }
}

/// PNG-encode an image as base64.
pub fn image_to_b64(image: &RgbImage) -> Result<String> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(B64.encode(buf.into_inner()))
}

/// Decode base64 PNG/JPEG bytes into an RGB image.
pub fn image_from_b64(data: &str) -> Result<RgbImage> {
    let bytes = B64
        .decode(data.trim())
        .map_err(|e| Error::Encoder(format!("invalid base64 image: {e}")))?;
    Ok(image::load_from_memory(&bytes)?.to_rgb8())
}

/// Server-side handlers: answer protocol requests from any [`EncoderClient`].
pub mod serve {
    use super::*;

    pub fn info(enc: &dyn EncoderClient) -> Result<InfoResponse> {
        Ok(enc.info()?.into())
    }

    pub fn encode_image(enc: &dyn EncoderClient, req: &EncodeImageRequest) -> Result<EncodeImageResponse> {
        let img = image_from_b64(&req.image_b64)?;
        Ok(enc.encode_image(&img, req.want_attention)?.into())
    }

    pub fn encode_image_batch(
        enc: &dyn EncoderClient,
        req: &EncodeImageBatchRequest,
    ) -> Result<EncodeImageBatchResponse> {
        let results = req.images.iter().map(|r| encode_image(enc, r)).collect::<Result<_>>()?;
        Ok(EncodeImageBatchResponse { results })
    }

    pub fn encode_text(enc: &dyn EncoderClient, req: &EncodeTextRequest) -> Result<EncodeTextResponse> {
        Ok(EncodeTextResponse {
            embedding: enc.encode_text(&req.text)?.into_vec(),
        })
    }
}
