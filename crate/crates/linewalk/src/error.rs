//! Error type shared by the whole pipeline.
//!
//! Variants are grouped by failure class so the CLI can map each class to a
//! distinct exit code.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A binary file (weights bundle, dataset, image) failed to parse.
    #[error("format error: {0}")]
    Format(String),

    /// No line found by the Hough search (empty or near-empty map).
    #[error("no line: {0}")]
    NoLine(String),

    /// Could not place the cut or find its flanking pixels.
    #[error("cut failure: {0}")]
    CutFailure(String),

    /// The threshold search exhausted the grid without reconnecting the cut.
    #[error("no closing threshold: {0}")]
    NoClosure(String),

    /// Cleaning did not yield a single closed 1-px curve.
    #[error("contour not closed: {0}")]
    NotClosed(String),

    /// A ground-truth contour mask is not a single closed 1-px curve.
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),

    /// Seeding produced no tracers, so there is nothing to accumulate.
    #[error("no seed tracers: {0}")]
    NoSeeds(String),

    /// Closed-contour fill had no background seed on the image border.
    #[error("fill failure: {0}")]
    FillFailure(String),

    /// Non-finite activations inside the network, with the layer named.
    #[error("numeric failure in layer {layer}: {detail}")]
    NumericFailure { layer: String, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
