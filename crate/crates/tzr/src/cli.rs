//! Command-line interface.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tzr_core::denseset::{build_denseset, AnnotationSet, Relevance};
use tzr_core::eval::{read_pairs_jsonl, recall_at_ks, write_pairs_jsonl};
use tzr_core::ingest::{ingest, IngestJob};
use tzr_core::synthetic::{planted_corpus, planted_pairs, write_corpus, PlantedConfig};
use tzr_core::{analyze_frame, EncoderClient, FrameIndex, FrameRef, Mode, ScoreScope, TestEncoder};

use crate::config::{EngineConfig, Overrides};
use crate::report::build_report;
use crate::{api, encoder_server};

#[derive(Debug, Parser)]
#[command(name = "tzr", version, about = "Training-free inverse-attention frame retrieval")]
pub struct Cli {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by all commands. Flags override the config file;
/// `TZR_ENCODER_URL` and `TZR_INDEX` override flags.
#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `builtin:test` or the base URL of a protocol encoder.
    #[arg(long, global = true)]
    pub encoder: Option<String>,
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// inverse_attention, grid or global_only.
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Mean-attention threshold T below which a window is a candidate.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub kernel: Option<u32>,
    #[arg(long, global = true)]
    pub stride: Option<u32>,
    /// Number of merged regions per frame.
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    #[arg(long, global = true)]
    pub kmeans_seed: Option<u64>,
    #[arg(long, global = true)]
    pub grid_rows: Option<u32>,
    #[arg(long, global = true)]
    pub grid_cols: Option<u32>,
    /// Video sampling rate in frames per second.
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Concurrent requests to a remote encoder.
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    #[arg(long, global = true)]
    pub bind: Option<String>,
}

impl EngineArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            encoder_url: self.encoder.clone(),
            index_path: self.index.clone(),
            http_bind: self.bind.clone(),
            mode: self.mode,
            fps: self.fps,
            workers: self.workers,
            max_in_flight: self.max_in_flight,
            kernel: self.kernel,
            stride: self.stride,
            threshold: self.threshold,
            clusters: self.clusters,
            kmeans_seed: self.kmeans_seed,
            grid_rows: self.grid_rows,
            grid_cols: self.grid_cols,
            ..Default::default()
        }
    }

    pub fn resolve(&self) -> Result<EngineConfig> {
        let file = self.config.as_deref().map(Overrides::from_file).transpose()?;
        EngineConfig::resolve(file.as_ref(), &self.overrides(), |k| std::env::var(k).ok())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample, analyse and index a video file or a directory of images.
    Ingest {
        source: PathBuf,
        /// Take frame ids from the digits in each file name instead of sample order.
        #[arg(long)]
        id_from_filename: bool,
    },
    /// Rank indexed frames against a text query.
    Search {
        query: String,
        #[arg(short, long, default_value_t = api::DEFAULT_K)]
        k: usize,
        #[arg(long)]
        json: bool,
    },
    /// Recall@K over a JSONL file of {"query", "relevant"} pairs.
    Eval {
        pairs: PathBuf,
        #[arg(short, long, value_delimiter = ',', default_value = "1,5,10")]
        k: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Run the pipeline on one image and show every stage.
    Analyze {
        image: PathBuf,
        #[arg(long)]
        query: Option<String>,
        /// Directory for the heatmap, mask and crop images.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Build the crowded-image benchmark from COCO-style instance annotations.
    Denseset {
        annotations: PathBuf,
        /// Eval pairs JSONL; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-image captions as JSONL.
        #[arg(long)]
        details: Option<PathBuf>,
        /// Count every selected image containing the class as relevant.
        #[arg(long)]
        any_containing: bool,
    },
    /// Serve the HTTP API over a saved index.
    Serve,
    /// Write the planted-object corpus and its eval pairs.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 512)]
        size: u32,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Serve the built-in test encoder over the encoder protocol.
    EncoderServe {
        /// Leave out the batch endpoint.
        #[arg(long)]
        no_batch: bool,
    },
}

fn scope(mode: Mode) -> ScoreScope {
    if mode == Mode::GlobalOnly {
        ScoreScope::GlobalOnly
    } else {
        ScoreScope::All
    }
}

fn load_index(cfg: &EngineConfig) -> Result<FrameIndex> {
    FrameIndex::load(&cfg.index_path).with_context(|| format!("loading index {}", cfg.index_path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.engine.resolve()?;
    let out = &mut std::io::stdout().lock();
    match cli.command {
        Command::Ingest {
            source,
            id_from_filename,
        } => {
            let encoder = cfg.encoder()?;
            let job = IngestJob {
                source,
                fps: cfg.fps,
                params: cfg.params.clone(),
                mode: cfg.mode,
                id_from_filename,
                workers: cfg.workers,
            };
            let (index, report) = ingest(&job, encoder.as_ref(), &cfg.index_path)?;
            writeln!(
                out,
                "index:        {} ({} frames)",
                cfg.index_path.display(),
                index.len()
            )?;
            writeln!(out, "mode:         {}", report.mode)?;
            writeln!(out, "fingerprint:  {:016x}", report.params_fingerprint)?;
            writeln!(out, "processed:    {}", report.frames_processed)?;
            for (regions, frames) in &report.regions_histogram {
                writeln!(out, "  {regions} regions: {frames} frames")?;
            }
            writeln!(out, "failures:     {}", report.failures.len())?;
            for f in &report.failures {
                writeln!(out, "  {} {:?}: {}", f.uri, f.timestamp, f.error)?;
            }
        }
        Command::Search { query, k, json } => {
            if query.trim().is_empty() {
                bail!("query must be nonempty");
            }
            let encoder = cfg.encoder()?;
            let index = load_index(&cfg)?;
            let t = encoder.encode_text(&query)?;
            let ranked = index.topk_scoped(&t, k, scope(cfg.mode))?;
            if json {
                serde_json::to_writer_pretty(&mut *out, &ranked)?;
                writeln!(out)?;
            } else {
                writeln!(
                    out,
                    "{:>4}  {:>8}  {:>9}  {:<10}  source",
                    "rank", "frame", "score", "best"
                )?;
                for (i, r) in ranked.iter().enumerate() {
                    let f = index
                        .get(r.frame_id)
                        .map(|r| r.frame)
                        .unwrap_or_else(|| FrameRef::new(r.frame_id, "", None));
                    let at = f.timestamp.map(|t| format!(" @ {t:.2}s")).unwrap_or_default();
                    writeln!(
                        out,
                        "{:>4}  {:>8}  {:>9.6}  {:<10}  {}{at}",
                        i + 1,
                        r.frame_id,
                        r.score,
                        r.best_source.to_string(),
                        f.source_uri
                    )?;
                }
            }
        }
        Command::Eval { pairs, k, json } => {
            let encoder = cfg.encoder()?;
            let index = load_index(&cfg)?;
            let pairs = read_pairs_jsonl(BufReader::new(
                File::open(&pairs).with_context(|| pairs.display().to_string())?,
            ))?;
            let recall = recall_at_ks(&index, encoder.as_ref(), &pairs, &k, scope(cfg.mode))?;
            if json {
                let body: Vec<api::RecallAt> = recall
                    .into_iter()
                    .map(|(k, recall)| api::RecallAt { k, recall })
                    .collect();
                serde_json::to_writer_pretty(&mut *out, &body)?;
                writeln!(out)?;
            } else {
                writeln!(out, "{} queries over {} frames", pairs.len(), index.len())?;
                for (k, r) in recall {
                    writeln!(out, "R@{k:<4} {r:.4}")?;
                }
            }
        }
        Command::Analyze {
            image,
            query,
            out: dir,
            json,
        } => {
            let encoder = cfg.encoder()?;
            let img = image::open(&image)
                .with_context(|| image.display().to_string())?
                .to_rgb8();
            let frame = FrameRef::new(0, image.display().to_string(), None);
            let analysis = analyze_frame(&img, &frame, &cfg.params, encoder.as_ref())?;
            let t = query.as_deref().map(|q| encoder.encode_text(q)).transpose()?;
            let report = build_report(&analysis, &cfg.params, query.as_deref().zip(t.as_ref()))?;
            if let Some(dir) = dir {
                write_stages(&dir, &analysis, &report)?;
            }
            if json {
                serde_json::to_writer_pretty(&mut *out, &report)?;
                writeln!(out)?;
            } else {
                writeln!(out, "frame:       {}x{}", report.width, report.height)?;
                writeln!(out, "candidates:  {}", report.candidates.len())?;
                writeln!(out, "regions:     {}", report.regions.len())?;
                for (j, r) in report.regions.iter().enumerate() {
                    let b = r.bbox;
                    let cos = r.cosine.map(|c| format!("  cos {c:.6}")).unwrap_or_default();
                    writeln!(
                        out,
                        "  r{}  [{}, {}, {}, {})  {} windows{cos}",
                        j + 1,
                        b.x0,
                        b.y0,
                        b.x1,
                        b.y1,
                        r.members.len()
                    )?;
                }
                if let (Some(g), Some(s), Some(src)) = (report.global_cosine, report.score, &report.best_source) {
                    writeln!(out, "global cos:  {g:.6}")?;
                    writeln!(out, "score:       {s:.6} ({src})")?;
                }
            }
        }
        Command::Denseset {
            annotations,
            out: pairs_out,
            details,
            any_containing,
        } => {
            let bytes = std::fs::read(&annotations).with_context(|| annotations.display().to_string())?;
            let ann = AnnotationSet::from_json(&bytes)?;
            let relevance = if any_containing {
                Relevance::AnyContaining
            } else {
                Relevance::Caption
            };
            let dense = build_denseset(&ann, relevance)?;
            match pairs_out {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(&p)?);
                    write_pairs_jsonl(&mut w, &dense.eval_pairs)?;
                    w.flush()?;
                }
                None => write_pairs_jsonl(&mut *out, &dense.eval_pairs)?,
            }
            if let Some(p) = details {
                let mut w = BufWriter::new(File::create(&p)?);
                for pair in &dense.pairs {
                    serde_json::to_writer(&mut w, pair)?;
                    writeln!(w)?;
                }
                w.flush()?;
            }
            eprintln!("{}", dense.report);
        }
        Command::Serve => {
            let index = load_index(&cfg)?;
            let encoder = cfg.encoder()?;
            let info = encoder.info()?;
            if let Some(d) = index.dim() {
                if d != info.dim {
                    bail!(
                        "index dimension {d} does not match encoder {} ({})",
                        info.name,
                        info.dim
                    );
                }
            }
            log::info!(
                "serving {} frames with encoder {} on {}",
                index.len(),
                info.name,
                cfg.http_bind
            );
            let app = api::router(api::AppState::new(index, encoder, cfg.params.clone()));
            serve_blocking(&cfg.http_bind, app)?;
        }
        Command::Synth {
            out: dir,
            frames,
            size,
            seed,
        } => {
            let corpus = planted_corpus(&PlantedConfig { frames, size, seed });
            write_corpus(&corpus, &dir)?;
            let pairs_path = dir.join("pairs.jsonl");
            let mut w = BufWriter::new(File::create(&pairs_path)?);
            write_pairs_jsonl(&mut w, &planted_pairs(&corpus))?;
            w.flush()?;
            writeln!(out, "wrote {} frames and {}", corpus.len(), pairs_path.display())?;
        }
        Command::EncoderServe { no_batch } => {
            let encoder: Arc<dyn EncoderClient> = Arc::new(TestEncoder::new());
            log::info!("serving the test encoder on {}", cfg.http_bind);
            serve_blocking(&cfg.http_bind, encoder_server::router(encoder, !no_batch))?;
        }
    }
    Ok(())
}

fn write_stages(dir: &Path, analysis: &tzr_core::FrameAnalysis, report: &crate::report::AnalysisReport) -> Result<()> {
    use base64::Engine as _;
    std::fs::create_dir_all(dir)?;
    let decode = |s: &str| base64::engine::general_purpose::STANDARD.decode(s);
    std::fs::write(dir.join("heatmap.png"), decode(&report.heatmap_png)?)?;
    std::fs::write(dir.join("mask.png"), decode(&report.low_attention_mask_png)?)?;
    for (j, crop) in analysis.crops.iter().enumerate() {
        crop.save(dir.join(format!("crop_{}.png", j + 1)))?;
    }
    std::fs::write(dir.join("analysis.json"), serde_json::to_vec_pretty(report)?)?;
    Ok(())
}

/// Bind and serve until interrupted.
pub fn serve_blocking(bind: &str, app: axum::Router) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr: SocketAddr = tokio::net::lookup_host(bind)
            .await?
            .next()
            .with_context(|| format!("cannot resolve {bind}"))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
