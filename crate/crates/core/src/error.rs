use thiserror::Error;

use crate::space::PointId;

/// Errors raised by the toolkit's operations.
///
/// Sampling checks never return these for a failed property; a counterexample
/// is reported as data instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown point {id} (space has {len} points)")]
    UnknownPoint { id: PointId, len: usize },

    #[error("empty support")]
    EmptySupport,

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("signed measure passed where a nonnegative measure is required")]
    SignedInput,

    #[error("measures {first} and {second} are not orthogonal (shared support point {point})")]
    NotOrthogonal {
        first: usize,
        second: usize,
        point: PointId,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("no localization witness at center {center} for delta = {delta}, eps = {eps}")]
    MissingWitness { center: PointId, delta: f64, eps: f64 },

    #[error("not eps-localizable at points {0:?}")]
    NotLocalizable(Vec<PointId>),

    #[error("not 0-localized: E({point}) = {e} exceeds the grid resolution {resolution}")]
    NotZeroLocalized {
        point: PointId,
        e: f64,
        resolution: f64,
    },

    #[error("mollification requires translation structure (a regular grid domain)")]
    RequiresGrid,

    #[error("density undefined: base measure has zero weight at point {0}")]
    DensityUndefined(PointId),

    #[error("markov invariant violated: {0}")]
    MarkovInvariant(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("postcondition failed: {0}")]
    Postcondition(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
