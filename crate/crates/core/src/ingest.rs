use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::encoder::EncoderClient;
use crate::error::{Error, Result};
use crate::geometry::FrameRef;
use crate::index::FrameIndex;
use crate::params::{Mode, PipelineParams};
use crate::pipeline::build_record;
use crate::record::FrameRecord;
use crate::sampling::{sample_frames, SampledFrame};

#[derive(Debug, Clone)]
pub struct IngestJob {
    pub source: PathBuf,
    /// Sampling rate for videos, frames per second.
    pub fps: f64,
    pub params: PipelineParams,
    pub mode: Mode,
    /// Take frame ids from the numeric part of image file names (e.g. COCO
    /// `000000139.jpg` → 139) instead of sample order.
    pub id_from_filename: bool,
    /// Frames analysed concurrently.
    pub workers: usize,
}

impl IngestJob {
    pub fn new(source: impl Into<PathBuf>) -> Self {
        Self {
            source: source.into(),
            fps: 1.0,
            params: PipelineParams::default(),
            mode: Mode::default(),
            id_from_filename: false,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestFailure {
    pub uri: String,
    pub timestamp: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub mode: Mode,
    pub params_fingerprint: u64,
    pub frames_processed: usize,
    /// Number of frames per region count.
    pub regions_histogram: BTreeMap<usize, usize>,
    pub failures: Vec<IngestFailure>,
}

fn numeric_stem(uri: &str) -> Option<u64> {
    let stem = Path::new(uri).file_stem()?.to_str()?;
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Analyse every sampled frame of `job.source` and insert the records into `index`.
pub fn ingest_into(job: &IngestJob, encoder: &dyn EncoderClient, index: &mut FrameIndex) -> Result<IngestReport> {
    job.params.validate()?;
    let frames = sample_frames(&job.source, job.fps)?;
    let mut report = IngestReport {
        mode: job.mode,
        params_fingerprint: job.params.fingerprint(job.mode),
        frames_processed: 0,
        regions_histogram: BTreeMap::new(),
        failures: Vec::new(),
    };
    let workers = job.workers.max(1);
    let mut seen = 0u64;
    let mut batch: Vec<(u64, Result<SampledFrame>)> = Vec::with_capacity(workers);
    let mut frames = frames.peekable();

    while frames.peek().is_some() {
        batch.clear();
        while batch.len() < workers {
            let Some(f) = frames.next() else { break };
            batch.push((seen, f));
            seen += 1;
        }
        let results: Vec<(Option<FrameRef>, Result<FrameRecord>)> = std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .map(|(pos, sampled)| {
                    s.spawn(move || {
                        let sampled = match sampled {
                            Ok(f) => f,
                            Err(e) => return (None, Err(Error::Video(e.to_string()))),
                        };
                        let id = if job.id_from_filename {
                            match numeric_stem(&sampled.uri) {
                                Some(id) => id,
                                None => {
                                    let err = Error::InvalidParams(format!("no numeric id in {}", sampled.uri));
                                    let frame = FrameRef::new(*pos, sampled.uri.clone(), sampled.timestamp);
                                    return (Some(frame), Err(err));
                                }
                            }
                        } else {
                            *pos
                        };
                        let frame = FrameRef::new(id, sampled.uri.clone(), sampled.timestamp);
                        let rec = build_record(&sampled.image, &frame, &job.params, job.mode, encoder);
                        (Some(frame), rec)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("ingest worker panicked"))
                .collect()
        });

        for (frame, result) in results {
            match result {
                Ok(rec) => {
                    *report.regions_histogram.entry(rec.regions.len()).or_default() += 1;
                    index.insert(rec)?;
                    report.frames_processed += 1;
                }
                Err(e) => {
                    log::warn!("skipping frame: {e}");
                    report.failures.push(IngestFailure {
                        uri: frame.as_ref().map(|f| f.source_uri.clone()).unwrap_or_default(),
                        timestamp: frame.and_then(|f| f.timestamp),
                        error: e.to_string(),
                    });
                }
            }
        }
    }

    if seen == 0 {
        return Err(Error::InvalidParams(format!(
            "{} contains no frames",
            job.source.display()
        )));
    }
    if report.frames_processed == 0 {
        return Err(Error::Encoder(format!(
            "all {} frames failed; first error: {}",
            seen, report.failures[0].error
        )));
    }
    Ok(report)
}

/// Ingest into a fresh index and write it to `index_path`.
pub fn ingest(job: &IngestJob, encoder: &dyn EncoderClient, index_path: &Path) -> Result<(FrameIndex, IngestReport)> {
    let mut index = FrameIndex::new();
    let report = ingest_into(job, encoder, &mut index)?;
    index.save(index_path)?;
    Ok((index, report))
}
