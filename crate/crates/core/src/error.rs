use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt file {}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },

    #[error("unsupported bit depth {0} (only 8-bit PNG is accepted)")]
    UnsupportedDepth(u8),

    #[error("zero variance")]
    ZeroVariance,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("sample {id}: {source}")]
    Sample {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {0} has no HR label (labeling oracle incomplete)")]
    MissingLabel(u64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Whether the failure came from the filesystem or a malformed file.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Corrupt { .. } | Error::UnsupportedDepth(_) => true,
            Error::MissingLabel(_) => true,
            Error::Sample { source, .. } => source.is_io(),
            _ => false,
        }
    }

    /// Whether the failure is numerical (divergence or non-finite values).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::NonFinite(_) => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
