use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification of errors, used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("oracle refused: n + m = {total} exceeds the enumeration limit {limit}")]
    OracleRefused { total: usize, limit: usize },

    #[error("zero self-similarity for {0}; cannot normalize")]
    Normalization(String),

    #[error("matrix not positive definite after jitter {jitter:e} (min diagonal pivot {min_pivot:e})")]
    IllConditioned { jitter: f64, min_pivot: f64 },

    #[error("Laplace iteration did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("negative latent variance {0:e}")]
    NegativeVariance(f64),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Validation(_)
            | Error::Precondition(_)
            | Error::DimensionMismatch(_)
            | Error::OracleRefused { .. }
            | Error::Json(_) => ErrorKind::Validation,
            Error::Normalization(_)
            | Error::IllConditioned { .. }
            | Error::Convergence { .. }
            | Error::NegativeVariance(_)
            | Error::Numerical(_) => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}
