//! Retrieval service HTTP API.
//!
//! `GET /healthz`, `GET /search?q=&k=&mode=`, `GET /frames/{id}`,
//! `GET /frames/{id}/analysis`, `POST /analyze`, `POST /eval`.

use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tzr_core::encoder::protocol::image_from_b64;
use tzr_core::eval::recall_at_ks;
use tzr_core::sampling::load_frame;
use tzr_core::{
    analyze_frame, BBox, BestSource, EncoderClient, Error, EvalPair, FrameIndex, FrameRef, Mode, PipelineParams,
    RetrievalResult, ScoreScope,
};

use crate::http_error::{blocking, ApiError, ApiResult};
use crate::report::{build_report, png_b64, thumbnail, AnalysisReport, THUMBNAIL_SIDE};

pub const DEFAULT_K: usize = 10;
pub const MAX_K: usize = 1000;

#[derive(Clone)]
pub struct AppState {
    pub index: Arc<RwLock<FrameIndex>>,
    pub encoder: Arc<dyn EncoderClient>,
    /// Defaults for `/analyze` requests that omit some parameters.
    pub params: PipelineParams,
}

impl AppState {
    pub fn new(index: FrameIndex, encoder: Arc<dyn EncoderClient>, params: PipelineParams) -> Self {
        Self {
            index: Arc::new(RwLock::new(index)),
            encoder,
            params,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/search", get(search))
        .route("/frames/{id}", get(frame))
        .route("/frames/{id}/analysis", get(frame_analysis))
        .route("/analyze", post(analyze))
        .route("/eval", post(eval))
        .with_state(state)
}

fn read_index(state: &AppState) -> std::sync::RwLockReadGuard<'_, FrameIndex> {
    state.index.read().unwrap_or_else(|p| p.into_inner())
}

/// Global-only requests score just the global embedding of each record;
/// other modes score every stored embedding.
fn scope_of(mode: Option<Mode>) -> ScoreScope {
    match mode {
        Some(Mode::GlobalOnly) => ScoreScope::GlobalOnly,
        _ => ScoreScope::All,
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub frames: usize,
    pub dim: Option<usize>,
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    let idx = read_index(&state);
    Json(Health {
        status: "ok".into(),
        frames: idx.len(),
        dim: idx.dim(),
    })
}

#[derive(Debug, Deserialize)]
pub struct SearchParams {
    pub q: Option<String>,
    pub k: Option<usize>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub rank: usize,
    pub frame_id: u64,
    pub score: f64,
    /// `global` or `region`.
    pub best_source: String,
    /// 1-based region index when a region produced the score.
    pub region_index: Option<usize>,
    pub region: Option<BBox>,
    pub source_uri: String,
    pub timestamp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub k: usize,
    pub mode: Option<Mode>,
    pub results: Vec<SearchHit>,
}

fn hit(idx: &FrameIndex, rank: usize, r: &RetrievalResult) -> SearchHit {
    let rec = idx.get(r.frame_id);
    let (best_source, region_index, region) = match r.best_source {
        BestSource::Global => ("global", None, None),
        BestSource::Region(j) => (
            "region",
            Some(j),
            rec.as_ref().and_then(|rec| rec.regions.get(j - 1)).map(|r| r.1),
        ),
    };
    let frame = rec
        .map(|r| r.frame)
        .unwrap_or_else(|| FrameRef::new(r.frame_id, "", None));
    SearchHit {
        rank,
        frame_id: r.frame_id,
        score: r.score,
        best_source: best_source.into(),
        region_index,
        region,
        source_uri: frame.source_uri,
        timestamp: frame.timestamp,
    }
}

async fn search(State(state): State<AppState>, Query(p): Query<SearchParams>) -> ApiResult<SearchResponse> {
    let q = p.q.unwrap_or_default();
    if q.trim().is_empty() {
        return Err(ApiError::bad_request("query parameter q is required"));
    }
    let k = p.k.unwrap_or(DEFAULT_K);
    if k == 0 || k > MAX_K {
        return Err(ApiError::bad_request(format!("k must lie in 1..={MAX_K}")));
    }
    blocking(move || {
        let t = state.encoder.encode_text(&q)?;
        let idx = read_index(&state);
        let ranked = idx.topk_scoped(&t, k, scope_of(p.mode))?;
        let results = ranked.iter().enumerate().map(|(i, r)| hit(&idx, i + 1, r)).collect();
        Ok(SearchResponse {
            query: q,
            k,
            mode: p.mode,
            results,
        })
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub frame_id: u64,
    pub source_uri: String,
    pub timestamp: Option<f64>,
    /// Hex digest of the ingest parameters and mode.
    pub params_fingerprint: String,
    pub embeddings: usize,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub thumbnail_png: Option<String>,
    pub thumbnail_error: Option<String>,
}

async fn frame(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<FrameInfo> {
    blocking(move || {
        let rec = read_index(&state).get(id).ok_or(Error::MissingFrame(id))?;
        let mut info = FrameInfo {
            frame_id: id,
            source_uri: rec.frame.source_uri.clone(),
            timestamp: rec.frame.timestamp,
            params_fingerprint: format!("{:016x}", rec.params_fingerprint),
            embeddings: rec.embedding_count(),
            width: None,
            height: None,
            thumbnail_png: None,
            thumbnail_error: None,
        };
        match load_frame(&rec.frame.source_uri, rec.frame.timestamp)
            .and_then(|img| Ok((img.dimensions(), png_b64(&thumbnail(&img, THUMBNAIL_SIDE))?)))
        {
            Ok(((w, h), png)) => {
                info.width = Some(w);
                info.height = Some(h);
                info.thumbnail_png = Some(png);
            }
            Err(e) => info.thumbnail_error = Some(e.to_string()),
        }
        Ok(info)
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAnalysis {
    pub frame_id: u64,
    pub params_fingerprint: String,
    pub regions: Vec<BBox>,
}

async fn frame_analysis(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<StoredAnalysis> {
    let rec = read_index(&state).get(id).ok_or(Error::MissingFrame(id))?;
    Ok(Json(StoredAnalysis {
        frame_id: id,
        params_fingerprint: format!("{:016x}", rec.params_fingerprint),
        regions: rec.regions.iter().map(|r| r.1).collect(),
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct AnalyzeRequest {
    /// Base64 PNG or JPEG. Either this or `frame_id` is required.
    pub image_b64: Option<String>,
    pub frame_id: Option<u64>,
    pub query: Option<String>,
    /// Partial parameters layered over the server's defaults.
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// Overlay the given fields onto `base`.
pub fn merge_params(
    base: &PipelineParams,
    patch: &serde_json::Map<String, serde_json::Value>,
) -> Result<PipelineParams, ApiError> {
    let mut value = serde_json::to_value(base).expect("params serialize");
    let obj = value.as_object_mut().expect("params are an object");
    for (k, v) in patch {
        if !obj.contains_key(k) {
            return Err(ApiError::bad_request(format!("unknown parameter {k:?}")));
        }
        obj.insert(k.clone(), v.clone());
    }
    let params: PipelineParams =
        serde_json::from_value(value).map_err(|e| ApiError::bad_request(format!("invalid parameters: {e}")))?;
    params.validate()?;
    Ok(params)
}

async fn analyze(State(state): State<AppState>, Json(req): Json<AnalyzeRequest>) -> ApiResult<AnalysisReport> {
    let params = merge_params(&state.params, &req.params)?;
    blocking(move || {
        let (image, frame) = match (&req.image_b64, req.frame_id) {
            (Some(b64), None) => (image_from_b64(b64)?, FrameRef::new(0, "upload", None)),
            (None, Some(id)) => {
                let rec = read_index(&state).get(id).ok_or(Error::MissingFrame(id))?;
                (load_frame(&rec.frame.source_uri, rec.frame.timestamp)?, rec.frame)
            }
            _ => {
                return Err(ApiError::bad_request(
                    "exactly one of image_b64 and frame_id is required",
                ))
            }
        };
        let analysis = analyze_frame(&image, &frame, &params, state.encoder.as_ref())?;
        let query = req.query.filter(|q| !q.trim().is_empty());
        let t = query.as_deref().map(|q| state.encoder.encode_text(q)).transpose()?;
        let q = query.as_deref().zip(t.as_ref());
        Ok(build_report(&analysis, &params, q)?)
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct EvalRequest {
    pub pairs: Vec<EvalPair>,
    #[serde(default = "default_ks")]
    pub k_values: Vec<usize>,
    pub mode: Option<Mode>,
}

fn default_ks() -> Vec<usize> {
    vec![1, 5, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub k: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub queries: usize,
    pub recall: Vec<RecallAt>,
}

async fn eval(State(state): State<AppState>, Json(req): Json<EvalRequest>) -> ApiResult<EvalResponse> {
    if req.k_values.is_empty() || req.k_values.iter().any(|&k| k == 0 || k > MAX_K) {
        return Err(ApiError::bad_request(format!(
            "k_values must be nonempty and lie in 1..={MAX_K}"
        )));
    }
    blocking(move || {
        let idx = read_index(&state);
        let r = recall_at_ks(
            &idx,
            state.encoder.as_ref(),
            &req.pairs,
            &req.k_values,
            scope_of(req.mode),
        )?;
        Ok(EvalResponse {
            queries: req.pairs.len(),
            recall: r.into_iter().map(|(k, recall)| RecallAt { k, recall }).collect(),
        })
    })
    .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_overlays_known_fields() {
        let base = PipelineParams::default();
        let patch = json!({"threshold": 0.9, "clusters": 1});
        let p = merge_params(&base, patch.as_object().unwrap()).unwrap();
        assert_eq!((p.threshold, p.clusters, p.kernel), (0.9, 1, 64));
        assert!(merge_params(&base, json!({"treshold": 0.9}).as_object().unwrap()).is_err());
        assert!(merge_params(&base, json!({"stride": 0}).as_object().unwrap()).is_err());
        assert!(merge_params(&base, json!({"kernel": "big"}).as_object().unwrap()).is_err());
    }
}
