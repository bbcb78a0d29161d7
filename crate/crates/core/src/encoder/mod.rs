//! Encoder abstraction: the dual text/image encoder the pipeline talks to,
//! either in-process ([`TestEncoder`]) or over HTTP ([`HttpEncoder`]).

mod builtin;
mod http;
pub mod protocol;

use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::embedding::Embedding;
use crate::error::{Error, Result};

pub use builtin::{bucket_color, hash_to_sphere, hsv_to_rgb, hue_bucket, TestEncoder, TEST_ENCODER_BUCKETS};
pub use http::HttpEncoder;

/// Environment variable selecting the encoder endpoint.
pub const ENCODER_URL_ENV: &str = "TZR_ENCODER_URL";
/// Endpoint value selecting the in-process test encoder.
pub const BUILTIN_TEST: &str = "builtin:test";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub name: String,
    pub dim: usize,
    /// Side of the square input the image tower expects.
    pub input_resolution: u32,
    pub attention_rows: u32,
    pub attention_cols: u32,
}

impl EncoderInfo {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Encoder(format!("encoder dim {} < 2", self.dim)));
        }
        if self.input_resolution < 16 {
            return Err(Error::Encoder(format!(
                "encoder input resolution {} < 16",
                self.input_resolution
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeImageResult {
    pub embedding: Embedding,
    /// Native-grid heatmap, present iff requested.
    pub attention: Option<AttentionMap>,
}

/// A dual encoder projecting text and images into one embedding space.
pub trait EncoderClient: Send + Sync {
    fn info(&self) -> Result<EncoderInfo>;

    fn encode_image(&self, image: &RgbImage, want_attention: bool) -> Result<EncodeImageResult>;

    /// Embeds several images; implementations may batch.
    fn encode_images(&self, images: &[RgbImage]) -> Result<Vec<Embedding>> {
        images
            .iter()
            .map(|img| self.encode_image(img, false).map(|r| r.embedding))
            .collect()
    }

    fn encode_text(&self, text: &str) -> Result<Embedding>;
}

impl<E: EncoderClient + ?Sized> EncoderClient for Arc<E> {
    fn info(&self) -> Result<EncoderInfo> {
        (**self).info()
    }
    fn encode_image(&self, image: &RgbImage, want_attention: bool) -> Result<EncodeImageResult> {
        (**self).encode_image(image, want_attention)
    }
    fn encode_images(&self, images: &[RgbImage]) -> Result<Vec<Embedding>> {
        (**self).encode_images(images)
    }
    fn encode_text(&self, text: &str) -> Result<Embedding> {
        (**self).encode_text(text)
    }
}

/// Resolve an endpoint selector: `builtin:test` or an `http(s)://` base URL.
pub fn connect(endpoint: &str) -> Result<Arc<dyn EncoderClient>> {
    if endpoint == BUILTIN_TEST {
        return Ok(Arc::new(TestEncoder::new()));
    }
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        return Ok(Arc::new(HttpEncoder::new(endpoint)?));
    }
    Err(Error::Encoder(format!(
        "unrecognized encoder endpoint {endpoint:?} (expected {BUILTIN_TEST} or an http URL)"
    )))
}
