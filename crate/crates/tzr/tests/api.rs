//! Retrieval HTTP API against an index ingested from the planted corpus.

mod common;

use std::sync::{Arc, OnceLock};

use serde_json::{json, Value};
use tzr::api::{AppState, EvalResponse, FrameInfo, SearchResponse, StoredAnalysis};
use tzr::report::AnalysisReport;
use tzr_core::encoder::protocol::image_to_b64;
use tzr_core::eval::recall_at_ks;
use tzr_core::ingest::{ingest, IngestJob};
use tzr_core::synthetic::{planted_corpus, planted_pairs, write_corpus, PlantedConfig, PlantedFrame};
use tzr_core::{
    analyze_frame, cosine, BestSource, EncoderClient, FrameIndex, FrameRef, PipelineParams, ScoreScope, TestEncoder,
};

struct Fixture {
    _dir: tempfile::TempDir,
    base: String,
    index: FrameIndex,
    frames: Vec<PlantedFrame>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let frames = planted_corpus(&PlantedConfig {
            frames: 32,
            ..Default::default()
        });
        write_corpus(&frames, &dir.path().join("frames")).unwrap();
        let (index, _) = ingest(
            &IngestJob::new(dir.path().join("frames")),
            &TestEncoder,
            &dir.path().join("i.tzr"),
        )
        .unwrap();
        let state = AppState::new(index.clone(), Arc::new(TestEncoder::new()), PipelineParams::default());
        let base = common::spawn(tzr::api::router(state));
        Fixture {
            _dir: dir,
            base,
            index,
            frames,
        }
    })
}

fn get(path: &str) -> (u16, Value) {
    let r = reqwest::blocking::get(format!("{}{path}", fixture().base)).unwrap();
    (r.status().as_u16(), r.json().unwrap_or(Value::Null))
}

fn post(path: &str, body: Value) -> (u16, Value) {
    let r = reqwest::blocking::Client::new()
        .post(format!("{}{path}", fixture().base))
        .json(&body)
        .send()
        .unwrap();
    (r.status().as_u16(), r.json().unwrap_or(Value::Null))
}

fn ok<T: serde::de::DeserializeOwned>((status, body): (u16, Value)) -> T {
    assert_eq!(status, 200, "{body}");
    serde_json::from_value(body).unwrap()
}

#[test]
fn healthz_reports_size() {
    let (status, body) = get("/healthz");
    assert_eq!(status, 200);
    assert_eq!(body, json!({"status": "ok", "frames": 32, "dim": 16}));
}

#[test]
fn search_equals_in_process_topk() {
    let f = fixture();
    for (q, k, mode, scope) in [
        ("color:3", 5, "", ScoreScope::All),
        ("color:11", 32, "&mode=inverse_attention", ScoreScope::All),
        ("crowd", 7, "", ScoreScope::All),
        ("color:3", 5, "&mode=global_only", ScoreScope::GlobalOnly),
    ] {
        let resp: SearchResponse = ok(get(&format!("/search?q={q}&k={k}{mode}")));
        let t = TestEncoder.encode_text(q).unwrap();
        let want = f.index.topk_scoped(&t, k, scope).unwrap();
        assert_eq!(resp.results.len(), want.len());
        for (i, (h, w)) in resp.results.iter().zip(&want).enumerate() {
            assert_eq!(h.rank, i + 1);
            assert_eq!(h.frame_id, w.frame_id);
            assert_eq!(h.score.to_bits(), w.score.to_bits(), "score changed in transit");
            match w.best_source {
                BestSource::Global => assert_eq!((h.best_source.as_str(), h.region_index), ("global", None)),
                BestSource::Region(j) => {
                    assert_eq!((h.best_source.as_str(), h.region_index), ("region", Some(j)));
                    assert_eq!(h.region, Some(f.index.get(w.frame_id).unwrap().regions[j - 1].1));
                }
            }
        }
    }
}

#[test]
fn planted_frame_ranks_first() {
    let f = fixture();
    let resp: SearchResponse = ok(get("/search?q=color:3&k=5"));
    let top = &resp.results[0];
    let planted = &f.frames[top.frame_id as usize];
    assert_eq!(planted.bucket, 3);
    assert_eq!(top.best_source, "region");
    assert!(top.region.unwrap().contains(&planted.square));
}

#[test]
fn search_rejects_bad_requests() {
    assert_eq!(get("/search?q=&k=5").0, 400);
    assert_eq!(get("/search?k=5").0, 400);
    assert_eq!(get("/search?q=color:1&k=0").0, 400);
    assert_eq!(get("/search?q=color:1&mode=fancy").0, 400);
}

#[test]
fn frame_metadata_and_stored_boxes() {
    let f = fixture();
    let info: FrameInfo = ok(get("/frames/4"));
    let rec = f.index.get(4).unwrap();
    assert_eq!(info.source_uri, rec.frame.source_uri);
    assert_eq!(info.params_fingerprint, format!("{:016x}", rec.params_fingerprint));
    assert_eq!((info.width, info.height), (Some(512), Some(512)));
    assert_eq!(info.embeddings, 1 + rec.regions.len());
    assert!(info.thumbnail_png.unwrap().len() > 100);

    let stored: StoredAnalysis = ok(get("/frames/4/analysis"));
    assert_eq!(stored.regions, rec.regions.iter().map(|r| r.1).collect::<Vec<_>>());
    assert_eq!(get("/frames/999").0, 404);
    assert_eq!(get("/frames/999/analysis").0, 404);
}

#[test]
fn analyze_equals_in_process_pipeline() {
    let f = fixture();
    let frame = &f.frames[6];
    let body =
        json!({"image_b64": image_to_b64(&frame.image).unwrap(), "query": "color:6", "params": {"threshold": 0.35}});
    let report: AnalysisReport = ok(post("/analyze", body));

    let params = PipelineParams {
        threshold: 0.35,
        ..Default::default()
    };
    let local = analyze_frame(&frame.image, &FrameRef::new(0, "upload", None), &params, &TestEncoder).unwrap();
    let t = TestEncoder.encode_text("color:6").unwrap();
    assert_eq!(report.params, params);
    assert_eq!((report.width, report.height), (512, 512));
    assert_eq!(report.candidates, local.candidates);
    assert_eq!(report.regions.len(), local.clusters.len());
    for ((r, c), e) in report.regions.iter().zip(&local.clusters).zip(&local.region_embeddings) {
        assert_eq!((r.bbox, &r.members), (c.bbox, &c.members));
        assert_eq!(r.cosine, Some(cosine(&t, e).unwrap()));
    }
    assert_eq!(report.global_cosine, Some(cosine(&t, &local.global).unwrap()));
    let best = report
        .regions
        .iter()
        .filter_map(|r| r.cosine)
        .chain(report.global_cosine)
        .fold(f64::MIN, f64::max);
    assert_eq!(report.score, Some(best));
    assert!(report.best_source.unwrap().starts_with("region"));
}

#[test]
fn analyze_stored_frame_and_slider_semantics() {
    let mut last = 0;
    for t in [0.1, 0.4, 0.6, 0.9] {
        let report: AnalysisReport = ok(post("/analyze", json!({"frame_id": 2, "params": {"threshold": t}})));
        assert!(report.candidates.len() >= last, "candidate count fell at T = {t}");
        last = report.candidates.len();
        assert!(report.score.is_none());
    }
    let report: AnalysisReport = ok(post("/analyze", json!({"frame_id": 2, "params": {"clusters": 1}})));
    assert_eq!(report.regions.len(), 1);
}

#[test]
fn analyze_rejects_bad_requests() {
    let img = image_to_b64(&fixture().frames[0].image).unwrap();
    assert_eq!(post("/analyze", json!({})).0, 400);
    assert_eq!(post("/analyze", json!({"image_b64": img, "frame_id": 1})).0, 400);
    assert_eq!(post("/analyze", json!({"image_b64": "%%%"})).0, 400);
    assert_eq!(
        post("/analyze", json!({"frame_id": 1, "params": {"stride": 500}})).0,
        400
    );
    assert_eq!(post("/analyze", json!({"frame_id": 1, "params": {"nope": 1}})).0, 400);
    assert_eq!(post("/analyze", json!({"frame_id": 999})).0, 404);
}

#[test]
fn eval_equals_in_process_recall() {
    let f = fixture();
    let pairs = planted_pairs(&f.frames);
    let resp: EvalResponse = ok(post("/eval", json!({"pairs": pairs, "k_values": [1, 3, 10]})));
    let want = recall_at_ks(&f.index, &TestEncoder, &pairs, &[1, 3, 10], ScoreScope::All).unwrap();
    assert_eq!(resp.queries, pairs.len());
    assert_eq!(resp.recall.iter().map(|r| (r.k, r.recall)).collect::<Vec<_>>(), want);
    assert_eq!(resp.recall[0].recall, 1.0);

    let global: EvalResponse = ok(post("/eval", json!({"pairs": pairs, "mode": "global_only"})));
    assert_eq!(global.recall.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 5, 10]);
    assert!(global.recall[0].recall < 0.5);

    assert_eq!(post("/eval", json!({"pairs": [], "k_values": [1]})).0, 400);
    assert_eq!(post("/eval", json!({"pairs": pairs, "k_values": [0]})).0, 400);
}
