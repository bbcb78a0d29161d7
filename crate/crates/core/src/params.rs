use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How frames are turned into retrievable records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Global embedding plus embeddings of clustered low-attention regions.
    #[default]
    InverseAttention,
    /// Global embedding plus one embedding per equal grid cell.
    Grid,
    /// Global embedding only.
    GlobalOnly,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::InverseAttention, Mode::Grid, Mode::GlobalOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::InverseAttention => "inverse_attention",
            Mode::Grid => "grid",
            Mode::GlobalOnly => "global_only",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse_attention" => Ok(Mode::InverseAttention),
            "grid" => Ok(Mode::Grid),
            "global_only" | "global" => Ok(Mode::GlobalOnly),
            other => Err(Error::InvalidParams(format!("unknown mode {other:?}"))),
        }
    }
}

/// Tunables of the low-attention pipeline and the grid baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    /// Side of the square sliding window, in image pixels.
    pub kernel: u32,
    pub stride: u32,
    /// Windows with mean attention strictly below this are candidates.
    pub threshold: f64,
    /// Number of merged regions per frame.
    pub clusters: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iters: usize,
    /// Relative SSE improvement below which k-means stops.
    pub kmeans_tol: f64,
    pub grid_rows: u32,
    pub grid_cols: u32,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            kernel: 64,
            stride: 32,
            threshold: 0.4,
            clusters: 5,
            kmeans_seed: 42,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            grid_rows: 3,
            grid_cols: 3,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.kernel == 0 {
            return bad("kernel must be positive");
        }
        if self.stride == 0 || self.stride > self.kernel {
            return bad("stride must satisfy 0 < stride <= kernel");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.clusters == 0 {
            return bad("clusters must be at least 1");
        }
        if self.kmeans_max_iters == 0 {
            return bad("kmeans_max_iters must be at least 1");
        }
        if self.kmeans_tol.is_nan() || self.kmeans_tol < 0.0 {
            return bad("kmeans_tol must be nonnegative");
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return bad("grid rows and cols must be at least 1");
        }
        Ok(())
    }

    /// Stable 64-bit digest of the parameters together with the ingest mode.
    pub fn fingerprint(&self, mode: Mode) -> u64 {
        let canonical = format!(
            "mode={};kernel={};stride={};threshold={:016x};clusters={};seed={};iters={};tol={:016x};grid={}x{}",
            mode,
            self.kernel,
            self.stride,
            self.threshold.to_bits(),
            self.clusters,
            self.kmeans_seed,
            self.kmeans_max_iters,
            self.kmeans_tol.to_bits(),
            self.grid_rows,
            self.grid_cols,
        );
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
