use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },

    #[error("mask value at index {index} is not 0 or 1")]
    NotBinary { index: usize },

    #[error("field sums to zero")]
    AllZeroField,

    #[error("negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },

    #[error("field has zero variance")]
    ZeroVariance,

    #[error("field is {width}x{height}, need at least 3x3")]
    FieldTooSmall { width: usize, height: usize },

    #[error("no pixel reaches threshold {threshold}")]
    EmptyRegion { threshold: f64 },

    #[error("mask must contain both foreground and background pixels")]
    DegenerateMask,

    #[error("time {value} outside [0, 1]")]
    TimeOutOfRange { value: f64 },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("non-finite state at outer step {t_step}, inner step {tau_step}")]
    NonFiniteState { t_step: usize, tau_step: usize },

    #[error("fixation set is empty")]
    EmptyFixationSet,

    #[error("no ground truth for prediction {name}")]
    MissingPair { name: String },

    #[error("could not place {n_targets} targets after {attempts} attempts")]
    PlacementFailure { n_targets: usize, attempts: usize },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed token {token:?}")]
    MalformedToken { token: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Plan(#[from] crate::tacot::PlanError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }

    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::MalformedHeader(_)
                | Error::MalformedToken { .. }
                | Error::DimensionMismatch { .. }
                | Error::EmptyDimensions { .. }
                | Error::NotBinary { .. }
                | Error::Json(_)
                | Error::Plan(crate::tacot::PlanError::InvalidRegistry(_))
        )
    }
}
