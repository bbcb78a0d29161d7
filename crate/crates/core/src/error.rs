use thiserror::Error;

/// Errors raised by the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate embedding: vector has no nonzero component")]
    DegenerateEmbedding,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("empty point set")]
    EmptyPointSet,

    #[error("empty crop: region {0:?} does not overlap the frame")]
    EmptyCrop(crate::geometry::BBox),

    #[error("empty index")]
    EmptyIndex,

    #[error("no evaluation pairs")]
    EmptyPairs,

    #[error("frame {0} referenced by an evaluation pair is not in the index")]
    MissingFrame(u64),

    #[error("encoder error: {0}")]
    Encoder(String),

    #[error("frame {frame_id} ({uri}): {source}")]
    Frame {
        frame_id: u64,
        uri: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("video error: {0}")]
    Video(String),

    #[error(transparent)]
    Persist(#[from] crate::index::persist::PersistError),
}

pub type Result<T> = std::result::Result<T, Error>;
