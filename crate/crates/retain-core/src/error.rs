use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetainError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("training failed in fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<RetainError>,
    },

    #[error("solver did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, RetainError>;
