//! End-to-end per-frame processing: global encoding, low-attention region
//! proposal, crop re-encoding, and record packaging for each ingest mode.

use image::RgbImage;

use crate::attention::{upsample_heatmap, AttentionMap};
use crate::crop::{grid_crops, lace};
use crate::embedding::Embedding;
use crate::encoder::EncoderClient;
use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameRef};
use crate::larc::{larc_clusters, RegionCluster};
use crate::lard::lard;
use crate::params::{Mode, PipelineParams};
use crate::record::{lafm_pack, FrameRecord};

/// Every intermediate stage of the low-attention pipeline for one frame.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub frame: FrameRef,
    /// Heatmap at image resolution.
    pub heatmap: AttentionMap,
    pub candidates: Vec<BBox>,
    pub clusters: Vec<RegionCluster>,
    pub crops: Vec<RgbImage>,
    pub global: Embedding,
    pub region_embeddings: Vec<Embedding>,
}

impl FrameAnalysis {
    pub fn regions(&self) -> Vec<BBox> {
        self.clusters.iter().map(|c| c.bbox).collect()
    }

    pub fn into_record(self, params_fingerprint: u64) -> Result<FrameRecord> {
        let boxes = self.regions();
        lafm_pack(
            self.global,
            self.region_embeddings,
            boxes,
            self.frame,
            params_fingerprint,
        )
    }
}

fn with_frame<T>(frame: &FrameRef, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Frame {
        frame_id: frame.frame_id,
        uri: frame.source_uri.clone(),
        source: Box::new(e),
    })
}

pub fn analyze_frame(
    image: &RgbImage,
    frame: &FrameRef,
    params: &PipelineParams,
    encoder: &dyn EncoderClient,
) -> Result<FrameAnalysis> {
    params.validate()?;
    let info = with_frame(frame, encoder.info())?;
    let encoded = with_frame(frame, encoder.encode_image(image, true))?;
    let native = encoded
        .attention
        .ok_or_else(|| Error::Encoder("encoder returned no attention map".into()));
    let native = with_frame(frame, native)?;
    let heatmap = upsample_heatmap(&native, image.width(), image.height())?;

    let candidates = lard(&heatmap, params);
    let clusters = larc_clusters(&candidates, image.width(), image.height(), params)?;
    let crops = clusters
        .iter()
        .map(|c| lace(&c.bbox, image, info.input_resolution))
        .collect::<Result<Vec<_>>>()?;
    let region_embeddings = with_frame(frame, encoder.encode_images(&crops))?;

    Ok(FrameAnalysis {
        frame: frame.clone(),
        heatmap,
        candidates,
        clusters,
        crops,
        global: encoded.embedding,
        region_embeddings,
    })
}

/// Build the record for one frame under the given ingest mode.
pub fn build_record(
    image: &RgbImage,
    frame: &FrameRef,
    params: &PipelineParams,
    mode: Mode,
    encoder: &dyn EncoderClient,
) -> Result<FrameRecord> {
    let fingerprint = params.fingerprint(mode);
    match mode {
        Mode::InverseAttention => analyze_frame(image, frame, params, encoder)?.into_record(fingerprint),
        Mode::GlobalOnly => {
            let g = with_frame(frame, encoder.encode_image(image, false))?.embedding;
            lafm_pack(g, vec![], vec![], frame.clone(), fingerprint)
        }
        Mode::Grid => {
            params.validate()?;
            let info = with_frame(frame, encoder.info())?;
            let g = with_frame(frame, encoder.encode_image(image, false))?.embedding;
            let (boxes, crops): (Vec<_>, Vec<_>) =
                grid_crops(image, params.grid_rows, params.grid_cols, info.input_resolution)?
                    .into_iter()
                    .unzip();
            let embs = with_frame(frame, encoder.encode_images(&crops))?;
            lafm_pack(g, embs, boxes, frame.clone(), fingerprint)
        }
    }
}
