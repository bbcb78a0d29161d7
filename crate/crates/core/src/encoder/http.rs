use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use image::RgbImage;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::*;
use super::{EncodeImageResult, EncoderClient, EncoderInfo};
use crate::embedding::{accept_unit, Embedding};
use crate::error::{Error, Result};

const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Counting gate limiting concurrent requests.
struct Gate {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.active.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Client for a remote encoder speaking the JSON protocol.
pub struct HttpEncoder {
    base: String,
    client: Client,
    gate: Gate,
    info: OnceLock<EncoderInfo>,
    batch_unsupported: AtomicBool,
}

impl HttpEncoder {
    pub fn new(base_url: &str) -> Result<Self> {
        Self::with_max_in_flight(base_url, DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_max_in_flight(base_url: &str, max_in_flight: usize) -> Result<Self> {
        let client = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| Error::Encoder(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            client,
            gate: Gate {
                limit: max_in_flight.max(1),
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
            info: OnceLock::new(),
            batch_unsupported: AtomicBool::new(false),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn transport(e: reqwest::Error) -> Error {
        Error::Encoder(format!("transport failure: {e}"))
    }

    fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R> {
        let _permit = self.gate.acquire();
        let resp = self.client.get(self.url(path)).send().map_err(Self::transport)?;
        Self::decode(path, resp)
    }

    /// `Ok(None)` when the endpoint answers 404.
    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<Option<R>> {
        let _permit = self.gate.acquire();
        let resp = self
            .client
            .post(self.url(path))
            .json(body)
            .send()
            .map_err(Self::transport)?;
        if resp.status() == StatusCode::NOT_FOUND {
            return Ok(None);
        }
        Self::decode(path, resp).map(Some)
    }

    fn post_required<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        self.post(path, body)?
            .ok_or_else(|| Error::Encoder(format!("{path}: endpoint not found")))
    }

    fn decode<R: DeserializeOwned>(path: &str, resp: reqwest::blocking::Response) -> Result<R> {
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Error::Encoder(format!("{path}: HTTP {status}: {body}")));
        }
        resp.json::<R>()
            .map_err(|e| Error::Encoder(format!("{path}: malformed response: {e}")))
    }
}

impl EncoderClient for HttpEncoder {
    fn info(&self) -> Result<EncoderInfo> {
        if let Some(info) = self.info.get() {
            return Ok(info.clone());
        }
        let info: EncoderInfo = self.get::<InfoResponse>("/info")?.into();
        info.validate()?;
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn encode_image(&self, image: &RgbImage, want_attention: bool) -> Result<EncodeImageResult> {
        let req = EncodeImageRequest {
            image_b64: image_to_b64(image)?,
            want_attention,
        };
        self.post_required::<_, EncodeImageResponse>("/encode_image", &req)?
            .into_result(want_attention)
    }

    fn encode_images(&self, images: &[RgbImage]) -> Result<Vec<Embedding>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        if !self.batch_unsupported.load(Ordering::Relaxed) {
            let req = EncodeImageBatchRequest {
                images: images
                    .iter()
                    .map(|img| {
                        Ok(EncodeImageRequest {
                            image_b64: image_to_b64(img)?,
                            want_attention: false,
                        })
                    })
                    .collect::<Result<_>>()?,
            };
            match self.post::<_, EncodeImageBatchResponse>("/encode_image_batch", &req)? {
                Some(resp) => {
                    if resp.results.len() != images.len() {
                        return Err(Error::Encoder(format!(
                            "batch returned {} results for {} images",
                            resp.results.len(),
                            images.len()
                        )));
                    }
                    return resp
                        .results
                        .into_iter()
                        .map(|r| r.into_result(false).map(|r| r.embedding))
                        .collect();
                }
                None => self.batch_unsupported.store(true, Ordering::Relaxed),
            }
        }
        images
            .iter()
            .map(|img| self.encode_image(img, false).map(|r| r.embedding))
            .collect()
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::Encoder("empty text".into()));
        }
        let resp: EncodeTextResponse =
            self.post_required("/encode_text", &EncodeTextRequest { text: text.to_string() })?;
        accept_unit(resp.embedding)
    }
}
