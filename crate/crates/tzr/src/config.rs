//! Engine configuration: a flat `key = value` file, overridden by command-line
//! flags, overridden by environment variables.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tzr_core::encoder::{HttpEncoder, BUILTIN_TEST, ENCODER_URL_ENV};
use tzr_core::{EncoderClient, Mode, PipelineParams, TestEncoder};

pub const INDEX_ENV: &str = "TZR_INDEX";

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub encoder_url: String,
    pub index_path: PathBuf,
    pub http_bind: String,
    pub mode: Mode,
    pub params: PipelineParams,
    pub fps: f64,
    pub workers: usize,
    pub max_in_flight: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            encoder_url: BUILTIN_TEST.to_string(),
            index_path: PathBuf::from("index.tzr"),
            http_bind: "127.0.0.1:8080".to_string(),
            mode: Mode::default(),
            params: PipelineParams::default(),
            fps: 1.0,
            workers: 4,
            max_in_flight: 4,
        }
    }
}

/// One layer of settings. Every field is optional; set fields replace the
/// value from the layer below. The same shape is read from the config file
/// and filled from command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub encoder_url: Option<String>,
    pub index_path: Option<PathBuf>,
    pub http_bind: Option<String>,
    pub mode: Option<Mode>,
    pub fps: Option<f64>,
    pub workers: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub kernel: Option<u32>,
    pub stride: Option<u32>,
    pub threshold: Option<f64>,
    pub clusters: Option<usize>,
    pub kmeans_seed: Option<u64>,
    pub kmeans_max_iters: Option<usize>,
    pub kmeans_tol: Option<f64>,
    pub grid_rows: Option<u32>,
    pub grid_cols: Option<u32>,
}

impl Overrides {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn apply(&self, cfg: &mut EngineConfig) {
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })* };
        }
        macro_rules! set_param {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { cfg.params.$field = v; })* };
        }
        set!(encoder_url, index_path, http_bind, mode, fps, workers, max_in_flight);
        set_param!(
            kernel,
            stride,
            threshold,
            clusters,
            kmeans_seed,
            kmeans_max_iters,
            kmeans_tol,
            grid_rows,
            grid_cols
        );
    }
}

impl EngineConfig {
    /// Layer defaults, file, flags and environment, then validate.
    pub fn resolve(file: Option<&Overrides>, flags: &Overrides, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            f.apply(&mut cfg);
        }
        flags.apply(&mut cfg);
        if let Some(url) = env(ENCODER_URL_ENV).filter(|s| !s.is_empty()) {
            cfg.encoder_url = url;
        }
        if let Some(path) = env(INDEX_ENV).filter(|s| !s.is_empty()) {
            cfg.index_path = PathBuf::from(path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            bail!("fps must be positive, got {}", self.fps);
        }
        if self.workers == 0 || self.max_in_flight == 0 {
            bail!("workers and max_in_flight must be at least 1");
        }
        Ok(())
    }

    pub fn encoder(&self) -> Result<Arc<dyn EncoderClient>> {
        if self.encoder_url == BUILTIN_TEST {
            return Ok(Arc::new(TestEncoder::new()));
        }
        if self.encoder_url.starts_with("http://") || self.encoder_url.starts_with("https://") {
            return Ok(Arc::new(HttpEncoder::with_max_in_flight(
                &self.encoder_url,
                self.max_in_flight,
            )?));
        }
        bail!(
            "unrecognized encoder {:?} (expected {BUILTIN_TEST} or an http URL)",
            self.encoder_url
        )
    }
}
