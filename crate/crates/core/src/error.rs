use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OasError>;

#[derive(Debug, Error)]
pub enum OasError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular or ill-conditioned matrix (condition estimate {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error(
        "decoupling failed in subframe {subframe}: condition estimate {condition:.3e} \
         for codewords {source_indices:?}"
    )]
    SingularSubframe {
        subframe: usize,
        source_indices: Vec<usize>,
        condition: f64,
    },

    #[error(
        "exhaustive selection would enumerate {subsets} subsets (budget {budget}); \
         use the stepwise strategy for codebooks of this size"
    )]
    BudgetExceeded { subsets: u128, budget: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl OasError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OasError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OasError::Io {
            path: path.into(),
            source,
        }
    }
}
