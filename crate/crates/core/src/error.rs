use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error at element ({m}, {n}): {msg}")]
    Domain { m: usize, n: usize, msg: String },

    #[error("range {range} m is below the near-singularity bound {min} m")]
    NearSingularity { range: f64, min: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coupling matrix is ill-conditioned (min singular value {min_singular:.4} < 0.1)")]
    Conditioning { min_singular: f64 },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("search failed: {0}")]
    SearchFailure(String),

    #[error("CSI error normalization undefined for a zero channel")]
    UndefinedNormalization,

    #[error("fairness undefined: all rates are zero")]
    UndefinedFairness,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("numerical failure in {context}")]
    Numerical { context: String },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("malformed result record (line {line}): {msg}")]
    Record { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
