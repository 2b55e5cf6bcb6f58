use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance generation failed: {0}")]
    InstanceGeneration(String),

    #[error("LP relaxation returned a fractional solution (max fractional part {max_frac:.3e})")]
    IntegralityViolation { max_frac: f64, solution: Vec<f64> },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
