use thiserror::Error;

/// Errors raised by the inference engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlissError {
    #[error("point {value} lies outside the domain [{start}, {end}]")]
    OutsideDomain { value: f64, start: f64, end: f64 },

    #[error("interval [{start}, {end}] has zero length")]
    DegenerateInterval { start: f64, end: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("covariance factorization failed after {attempts} jitter attempts")]
    Factorization { attempts: usize },

    #[error("noiseless signal has zero empirical variance")]
    ZeroSignalVariance,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        source: Box<BlissError>,
    },
}

impl BlissError {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            BlissError::NonFinite(_)
            | BlissError::NotPositiveDefinite(_)
            | BlissError::DegeneratePosterior(_)
            | BlissError::Factorization { .. }
            | BlissError::ZeroSignalVariance => true,
            BlissError::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, BlissError>;
