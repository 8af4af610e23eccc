use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("data not found: {0}")]
    DataNotFound(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("empty intersection of dates across tickers")]
    EmptyIntersection,

    #[error("nonpositive price {value} for {ticker} on {date}")]
    NonpositivePrice {
        ticker: String,
        date: String,
        value: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("perturbation block {block} has zero norm after resampling")]
    ZeroNormBlock { block: usize },

    #[error("terminal value {value} of asset {asset} outside [{lower}, {upper}]")]
    OutOfBounds {
        asset: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("brute-force guard violated: {0}")]
    Guard(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit status: 2 for input errors, 3 for incompatible
    /// checkpoints, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Compatibility(_) => 3,
            Error::Numerical(_) | Error::ZeroNormBlock { .. } | Error::OutOfBounds { .. } => 4,
            _ => 2,
        }
    }
}
