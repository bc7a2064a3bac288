use thiserror::Error;

/// Errors produced anywhere in the sorting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains NaN or infinite values")]
    NonFinite,

    #[error("denominator matrix is not positive definite (ridge tried: {ridge:e})")]
    SingularDenominator { ridge: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid filter band: {0}")]
    InvalidBand(String),

    #[error("trace too short: {len} samples, need more than {min}")]
    TooShort { len: usize, min: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("candidate cluster count {c} is not below the number of spikes {n}")]
    RangeTooLarge { c: usize, n: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical core (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite | Error::SingularDenominator { .. } | Error::DegenerateData(_) | Error::EmptyCluster(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
