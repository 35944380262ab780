use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value left the finite reals, or an interval was built with `lo > hi`.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// Caller violated an operation precondition (bad index, unnormalized input, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("affine forms belong to different noise-symbol spaces ({left} vs {right})")]
    SymbolSpaceMismatch { left: u64, right: u64 },

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    /// An invariant that only a soundness bug can break.
    #[error("soundness violation: {0}")]
    Soundness(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::NumericDomain(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
