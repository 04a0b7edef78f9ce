use std::path::PathBuf;

use crate::types::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invariant violated: {0}")]
    Invariant(#[from] Violation),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("no annotators")]
    NoAnnotators,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid Gleason label {value} at pixel ({row}, {col})")]
    GleasonLabel { value: u8, row: usize, col: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("empty split `{0}`")]
    EmptySplit(String),

    #[error("backward called before forward")]
    BackwardBeforeForward,

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("config fingerprint mismatch: checkpoint has {found}, expected {expected}")]
    Fingerprint { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("training diverged at iteration {iter}: non-finite loss")]
    Diverged { iter: u64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            context,
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data or configuration, as opposed
    /// to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invariant(_)
                | Error::Shape { .. }
                | Error::NoAnnotators
                | Error::Config(_)
                | Error::GleasonLabel { .. }
                | Error::Dataset(_)
                | Error::EmptySplit(_)
                | Error::Checkpoint { .. }
                | Error::Fingerprint { .. }
                | Error::Json(_)
        )
    }
}
