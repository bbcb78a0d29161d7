//! Stage-by-stage rendering of one frame analysis, shared by `POST /analyze`
//! and `tzr analyze`.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use image::{GrayImage, ImageFormat, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use tzr_core::crop::resize_bilinear;
use tzr_core::{cosine, lafm_pack, score_frame, BBox, Embedding, FrameAnalysis, PipelineParams, Result};

pub const THUMBNAIL_SIDE: u32 = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub bbox: BBox,
    /// Indices into `candidates` merged into this region.
    pub members: Vec<usize>,
    pub crop_png: String,
    pub cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub width: u32,
    pub height: u32,
    pub params: PipelineParams,
    /// Attention at frame resolution, 0 to 255.
    pub heatmap_png: String,
    /// White where attention is below the threshold.
    pub low_attention_mask_png: String,
    pub candidates: Vec<BBox>,
    pub regions: Vec<RegionReport>,
    pub query: Option<String>,
    pub global_cosine: Option<f64>,
    pub score: Option<f64>,
    pub best_source: Option<String>,
}

pub fn png_b64<P, C>(image: &image::ImageBuffer<P, C>) -> Result<String>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, ImageFormat::Png)?;
    Ok(B64.encode(buf.into_inner()))
}

/// Shrink so the longer side is at most `max_side`; smaller images are kept.
pub fn thumbnail(image: &RgbImage, max_side: u32) -> RgbImage {
    let (w, h) = image.dimensions();
    let long = w.max(h);
    if long <= max_side {
        return image.clone();
    }
    let scale = max_side as f64 / long as f64;
    let tw = ((w as f64 * scale).round() as u32).max(1);
    let th = ((h as f64 * scale).round() as u32).max(1);
    resize_bilinear(image, tw, th)
}

pub fn build_report(
    analysis: &FrameAnalysis,
    params: &PipelineParams,
    query: Option<(&str, &Embedding)>,
) -> Result<AnalysisReport> {
    let h = &analysis.heatmap;
    let heat = GrayImage::from_fn(h.width(), h.height(), |x, y| {
        Luma([(h.get(x, y) * 255.0).round() as u8])
    });
    let mask_bits = h.low_mask(params.threshold as f32);
    let mask = GrayImage::from_fn(h.width(), h.height(), |x, y| {
        Luma([if mask_bits[(y * h.width() + x) as usize] {
            255
        } else {
            0
        }])
    });

    let mut regions = Vec::with_capacity(analysis.clusters.len());
    for ((cluster, crop), emb) in analysis
        .clusters
        .iter()
        .zip(&analysis.crops)
        .zip(&analysis.region_embeddings)
    {
        regions.push(RegionReport {
            bbox: cluster.bbox,
            members: cluster.members.clone(),
            crop_png: png_b64(&thumbnail(crop, THUMBNAIL_SIDE / 2))?,
            cosine: query.map(|(_, t)| cosine(t, emb)).transpose()?,
        });
    }

    let (global_cosine, score, best_source) = match query {
        Some((_, t)) => {
            let rec = lafm_pack(
                analysis.global.clone(),
                analysis.region_embeddings.clone(),
                analysis.regions(),
                analysis.frame.clone(),
                0,
            )?;
            let (s, src) = score_frame(t, &rec)?;
            (Some(cosine(t, &analysis.global)?), Some(s), Some(src.to_string()))
        }
        None => (None, None, None),
    };

    Ok(AnalysisReport {
        width: h.width(),
        height: h.height(),
        params: params.clone(),
        heatmap_png: png_b64(&heat)?,
        low_attention_mask_png: png_b64(&mask)?,
        candidates: analysis.candidates.clone(),
        regions,
        query: query.map(|(q, _)| q.to_string()),
        global_cosine,
        score,
        best_source,
    })
}
