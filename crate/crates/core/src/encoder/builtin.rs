use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{EncodeImageResult, EncoderClient, EncoderInfo};
use crate::attention::AttentionMap;
use crate::embedding::{l2_normalize_f64, Embedding};
use crate::error::{Error, Result};

/// Number of hue buckets, equal to the embedding dimension.
pub const TEST_ENCODER_BUCKETS: usize = 16;
const ATTENTION_GRID: u32 = 16;
const SATURATION_CUTOFF: f64 = 0.5;

/// Deterministic stand-in for a vision-language model.
///
/// Images embed as the normalized histogram of hue buckets over saturated
/// pixels; text `"color:i"` embeds as the basis vector `e_i`. Attention is
/// mean luminance per cell of a 16×16 grid, so bright areas draw attention
/// while dim saturated patches carry the semantics.
#[derive(Debug, Clone, Default)]
pub struct TestEncoder;

impl TestEncoder {
    pub fn new() -> Self {
        TestEncoder
    }
}

/// Hue bucket of a pixel, or `None` when its saturation is at most 0.5.
pub fn hue_bucket(px: [u8; 3]) -> Option<usize> {
    let [r, g, b] = px.map(|c| c as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    if max <= 0.0 {
        return None;
    }
    let chroma = max - min;
    if chroma / max <= SATURATION_CUTOFF {
        return None;
    }
    let hue = if max == r {
        60.0 * ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / chroma + 2.0)
    } else {
        60.0 * ((r - g) / chroma + 4.0)
    };
    let bucket = (hue / (360.0 / TEST_ENCODER_BUCKETS as f64)).floor() as usize;
    Some(bucket.min(TEST_ENCODER_BUCKETS - 1))
}

/// Fully saturated color at the center hue of `bucket`, with HSV value `value`.
pub fn bucket_color(bucket: usize, value: f64) -> Rgb<u8> {
    let hue = (bucket as f64 + 0.5) * 360.0 / TEST_ENCODER_BUCKETS as f64;
    hsv_to_rgb(hue, 1.0, value)
}

pub fn hsv_to_rgb(hue: f64, sat: f64, value: f64) -> Rgb<u8> {
    let c = value * sat;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    let q = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([q(r), q(g), q(b)])
}

/// Deterministic unit vector derived from a SHA-256 digest of `bytes`.
pub fn hash_to_sphere(bytes: &[u8], dim: usize) -> Embedding {
    let seed: [u8; 32] = Sha256::digest(bytes).into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(e) = l2_normalize_f64(&v) {
            return e;
        }
    }
}

fn luminance(px: &Rgb<u8>) -> f64 {
    let [r, g, b] = px.0.map(|c| c as f64 / 255.0);
    0.299 * r + 0.587 * g + 0.114 * b
}

fn cell_bounds(len: u32, cells: u32, i: u32) -> (u32, u32) {
    let lo = (i as u64 * len as u64 / cells as u64) as u32;
    let hi = ((i as u64 + 1) * len as u64 / cells as u64) as u32;
    let lo = lo.min(len - 1);
    (lo, hi.max(lo + 1).min(len))
}

fn attention(image: &RgbImage) -> Result<AttentionMap> {
    let mut raw = Vec::with_capacity((ATTENTION_GRID * ATTENTION_GRID) as usize);
    for gy in 0..ATTENTION_GRID {
        let (y0, y1) = cell_bounds(image.height(), ATTENTION_GRID, gy);
        for gx in 0..ATTENTION_GRID {
            let (x0, x1) = cell_bounds(image.width(), ATTENTION_GRID, gx);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += luminance(image.get_pixel(x, y));
                }
            }
            raw.push(sum / ((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    AttentionMap::from_raw(ATTENTION_GRID, ATTENTION_GRID, &raw)
}

fn image_digest_bytes(image: &RgbImage) -> Vec<u8> {
    let mut bytes = b"image:".to_vec();
    bytes.extend_from_slice(&image.width().to_le_bytes());
    bytes.extend_from_slice(&image.height().to_le_bytes());
    bytes.extend_from_slice(image.as_raw());
    bytes
}

impl EncoderClient for TestEncoder {
    fn info(&self) -> Result<EncoderInfo> {
        Ok(EncoderInfo {
            name: super::BUILTIN_TEST.to_string(),
            dim: TEST_ENCODER_BUCKETS,
            input_resolution: 224,
            attention_rows: ATTENTION_GRID,
            attention_cols: ATTENTION_GRID,
        })
    }

    fn encode_image(&self, image: &RgbImage, want_attention: bool) -> Result<EncodeImageResult> {
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Encoder("empty image".into()));
        }
        let mut hist = [0.0f64; TEST_ENCODER_BUCKETS];
        for px in image.pixels() {
            if let Some(b) = hue_bucket(px.0) {
                hist[b] += 1.0;
            }
        }
        let embedding = if hist.iter().any(|&c| c > 0.0) {
            l2_normalize_f64(&hist)?
        } else {
            hash_to_sphere(&image_digest_bytes(image), TEST_ENCODER_BUCKETS)
        };
        let attention = want_attention.then(|| attention(image)).transpose()?;
        Ok(EncodeImageResult { embedding, attention })
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::Encoder("empty text".into()));
        }
        if let Some(i) = text.strip_prefix("color:").and_then(|s| s.parse::<usize>().ok()) {
            if i < TEST_ENCODER_BUCKETS {
                return Ok(Embedding::basis(TEST_ENCODER_BUCKETS, i));
            }
        }
        let mut bytes = b"text:".to_vec();
        bytes.extend_from_slice(text.as_bytes());
        Ok(hash_to_sphere(&bytes, TEST_ENCODER_BUCKETS))
    }
}
