use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the pipeline.
///
/// The variants fall into two families: contract violations (bad arguments,
/// degenerate numerics) and I/O or format problems. [`Error::is_io`] tells
/// them apart, which the command-line front end maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero-norm vector where a cosine similarity was required")]
    ZeroVector,
    #[error("no anchor has a non-empty positive set")]
    EmptyPositives,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid stride {stride} for a {h}x{w} grid")]
    BadStride { stride: usize, h: usize, w: usize },
    #[error("cannot downsample {src_h}x{src_w} to {dst_h}x{dst_w}")]
    BadTarget {
        src_h: usize,
        src_w: usize,
        dst_h: usize,
        dst_w: usize,
    },
    #[error("image has {pixels} pixels, fewer than the {requested} requested clusters")]
    TooManyClusters { pixels: usize, requested: usize },
    #[error("cache does not belong to the current parameters")]
    StaleCache,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by files or their encoding rather than by
    /// the values they carry.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::TruncatedPayload { .. } | Error::Io { .. } | Error::Json(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
