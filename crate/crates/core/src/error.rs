use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor extent did not match what an operation requires.
    #[error("{op}: dimension error on {axis}: {detail}")]
    Dimension {
        op: &'static str,
        axis: String,
        detail: String,
    },

    /// A caller violated an operation precondition that is not about shapes.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("singular transform: |det| = {det:e} is below {min:e}")]
    SingularTransform { det: f64, min: f64 },

    #[error("annotation error in {image}: {detail}")]
    Annotation { image: String, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at iteration {iter}: loss = {loss}")]
    Diverged { iter: usize, loss: f64 },

    #[error("checkpoint CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    Crc { stored: u32, computed: u32 },

    #[error("checkpoint format version {found} is not supported (expected {expected}); re-save it with a matching release")]
    Version { found: u16, expected: u16 },

    #[error("checkpoint is missing array {0}")]
    MissingArray(String),

    #[error("checkpoint contains unknown array {0}")]
    UnknownArray(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, axis: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            axis: axis.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
