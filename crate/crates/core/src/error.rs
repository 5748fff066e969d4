use thiserror::Error;

/// Errors raised by weight selection, estimation, simulation and the
/// mapping pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WleError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("covariance undefined: populations are not column-aligned")]
    CovarianceUndefined,

    #[error("singular matrix: pivot {pivot:e} below threshold at column {column}")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("degenerate constraint: {0}")]
    DegenerateConstraint(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ingest error at {location}: {message}")]
    Ingest { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl WleError {
    /// True for failures caused by numerical degeneracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            WleError::DegenerateSamples(_)
                | WleError::SingularMatrix { .. }
                | WleError::DegenerateConstraint(_)
                | WleError::OptimizationFailed(_)
        )
    }

    pub(crate) fn ingest(location: impl Into<String>, message: impl Into<String>) -> Self {
        WleError::Ingest {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for WleError {
    fn from(err: std::io::Error) -> Self {
        WleError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WleError>;
