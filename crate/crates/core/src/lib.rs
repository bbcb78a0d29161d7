//! Training-free frame retrieval that augments each frame's global image
//! embedding with embeddings of the regions the encoder attended to least.
//!
//! Per frame: the encoder returns a global embedding and an attention
//! heatmap; [`lard`] scans the heatmap for low-attention windows, [`larc`]
//! clusters them into a few merged regions, [`crop::lace`] cuts those regions
//! out of the frame, and each crop is re-encoded. A frame then scores against
//! a text query as the best cosine over its global and region embeddings
//! ([`record::score_frame`]), and [`index::FrameIndex`] serves exact top-k.

pub mod attention;
pub mod crop;
pub mod denseset;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod index;
pub mod ingest;
pub mod kmeans;
pub mod larc;
pub mod lard;
pub mod params;
pub mod pipeline;
pub mod record;
pub mod sampling;
pub mod synthetic;

pub use attention::{upsample_heatmap, AttentionMap};
pub use embedding::{cosine, l2_normalize, Embedding};
pub use encoder::{connect, EncoderClient, EncoderInfo, TestEncoder};
pub use error::{Error, Result};
pub use eval::EvalPair;
pub use geometry::{BBox, FrameRef};
pub use index::{FrameIndex, RetrievalResult, ScoreScope};
pub use params::{Mode, PipelineParams};
pub use pipeline::{analyze_frame, build_record, FrameAnalysis};
pub use record::{lafm_pack, score_frame, BestSource, FrameRecord};
