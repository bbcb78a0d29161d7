//! Planted-object corpus for closed-loop evaluation with the test encoder.
//!
//! Each frame is a bright, weakly saturated "crowd" of 8×8 tiles drawn from a
//! per-frame palette, with one dark corner holding a dim but fully saturated
//! 48×48 square. The crowd dominates both the global hue histogram and the
//! luminance attention, so the square is only visible to region crops.

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{bucket_color, TEST_ENCODER_BUCKETS};
use crate::error::Result;
use crate::eval::EvalPair;
use crate::geometry::BBox;

pub const SQUARE: u32 = 48;
const TILE: u32 = 8;
/// The square is placed inside a window of this size on this stride lattice,
/// matching the default detection parameters, so that at least one scanned
/// window fully contains it.
const WINDOW: u32 = 64;
const STRIDE: u32 = 32;
const MARGIN: u32 = 16;

#[derive(Debug, Clone)]
pub struct PlantedFrame {
    pub frame_id: u64,
    pub image: RgbImage,
    /// Hue bucket of the planted square.
    pub bucket: usize,
    pub square: BBox,
    pub dark_corner: BBox,
}

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub frames: usize,
    pub size: u32,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            frames: 100,
            size: 512,
            seed: 2024,
        }
    }
}

fn crowd_tile(rng: &mut ChaCha8Rng, palette: &[(usize, f64)]) -> Rgb<u8> {
    if rng.random::<f64>() < 0.4 {
        let v = rng.random_range(225..=250);
        return Rgb([v, v, v]);
    }
    let mut pick = rng.random::<f64>() * palette.iter().map(|p| p.1).sum::<f64>();
    let mut bucket = palette[0].0;
    for &(b, w) in palette {
        if pick < w {
            bucket = b;
            break;
        }
        pick -= w;
    }
    let width = 360.0 / TEST_ENCODER_BUCKETS as f64;
    let hue = (bucket as f64 + 0.5) * width + rng.random_range(-0.3..0.3) * width;
    crate::encoder::hsv_to_rgb(hue, rng.random_range(0.6..0.7), rng.random_range(0.9..1.0))
}

pub fn planted_frame(frame_id: u64, bucket: usize, size: u32, rng: &mut ChaCha8Rng) -> PlantedFrame {
    let palette: Vec<(usize, f64)> = sample(rng, TEST_ENCODER_BUCKETS, 3)
        .into_iter()
        .map(|b| (b, rng.random_range(0.25..0.45)))
        .collect();
    let tiles = size.div_ceil(TILE);
    let colors: Vec<Rgb<u8>> = (0..tiles * tiles).map(|_| crowd_tile(rng, &palette)).collect();
    let mut image = RgbImage::from_fn(size, size, |x, y| colors[((y / TILE) * tiles + x / TILE) as usize]);

    let side = rng.random_range(128..=200u32).min(size);
    let corner = rng.random_range(0..4u32);
    let (cx, cy) = (
        if corner & 1 == 0 { 0 } else { size - side },
        if corner & 2 == 0 { 0 } else { size - side },
    );
    let dark_corner = BBox::from_origin(cx as i64, cy as i64, side as i64, side as i64);
    let mut place = |c: u32| {
        let lo = (c + MARGIN).div_ceil(STRIDE);
        let hi = (c + side - MARGIN - WINDOW) / STRIDE;
        rng.random_range(lo..=hi) * STRIDE + rng.random_range(0..=WINDOW - SQUARE)
    };
    let (sx, sy) = (place(cx), place(cy));
    let square = BBox::from_origin(sx as i64, sy as i64, SQUARE as i64, SQUARE as i64);
    let ink = bucket_color(bucket, 0.35);
    for y in cy..cy + side {
        for x in cx..cx + side {
            let inside = (sx..sx + SQUARE).contains(&x) && (sy..sy + SQUARE).contains(&y);
            image.put_pixel(x, y, if inside { ink } else { Rgb([10, 10, 10]) });
        }
    }
    PlantedFrame {
        frame_id,
        image,
        bucket,
        square,
        dark_corner,
    }
}

/// Frames with square buckets `frame_id % 16`, so each bucket appears in at
/// most `ceil(frames / 16)` frames.
pub fn planted_corpus(cfg: &PlantedConfig) -> Vec<PlantedFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.frames as u64)
        .map(|id| planted_frame(id, id as usize % TEST_ENCODER_BUCKETS, cfg.size, &mut rng))
        .collect()
}

/// One `color:i` query per bucket in use, relevant to every frame planted with it.
pub fn planted_pairs(frames: &[PlantedFrame]) -> Vec<EvalPair> {
    let mut by_bucket: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for f in frames {
        by_bucket.entry(f.bucket).or_default().push(f.frame_id);
    }
    by_bucket
        .into_iter()
        .map(|(b, ids)| EvalPair::new(format!("color:{b}"), ids))
        .collect()
}

/// Write frames as `frame_NNNN.png` into `dir`.
pub fn write_corpus(frames: &[PlantedFrame], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in frames {
        f.image.save(dir.join(format!("frame_{:04}.png", f.frame_id)))?;
    }
    Ok(())
}
