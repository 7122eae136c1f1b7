use std::path::PathBuf;

use crate::mrf::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        /// One-based data row (the header is row 0).
        row: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("cholesky factorization failed with final jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("instance too large for exhaustive enumeration: {labels}^{sites} labelings exceeds {limit}")]
    TooLarge {
        labels: usize,
        sites: usize,
        limit: u64,
    },

    #[error("energy is not pairwise graph-representable: {0}")]
    NotRepresentable(Violation),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
