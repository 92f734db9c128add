//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("category id {id} out of range 1..={max}")]
    CategoryOutOfRange { id: u32, max: u32 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A foreground label that is missing from its image's positive set.
    #[error("label {label} not in positive set of image {image_id}")]
    InconsistentAnnotation { label: u32, image_id: u64 },

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// Malformed record in an input file, with its zero-based index.
    #[error("record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad inputs or configuration, as opposed to
    /// runtime failures (I/O, divergence). Drives the CLI exit-code split.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
