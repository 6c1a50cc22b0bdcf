use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the counting routines.
///
/// Every operation that could blow past a work or memory ceiling checks its
/// budget up front and reports [`LabError::BudgetExceeded`] instead of
/// running away.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension {dim} outside supported range {min}..={max}")]
    BadDimension { dim: usize, min: usize, max: usize },

    #[error("{what}: estimated {needed} exceeds budget {budget}")]
    BudgetExceeded { what: &'static str, needed: u128, budget: u128 },

    #[error("no cached shell at {0}")]
    CacheMiss(PathBuf),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt shell file {path}: {reason}")]
    FormatCorrupt { path: PathBuf, reason: String },

    #[error("arithmetic overflow in {0}")]
    ArithmeticOverflow(&'static str),

    #[error("sum vector is zero; no unique hyperplane")]
    DegenerateSum,

    #[error("{0}")]
    OutOfRange(String),

    #[error("bad subspace: {0}")]
    BadSubspace(String),

    #[error("bad specification: {0}")]
    BadSpec(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fit needs at least {needed} rows, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("fit rows must be positive; row {0} is not")]
    NonPositive(usize),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub(crate) fn budget(what: &'static str, needed: u128, budget: u128) -> Self {
        LabError::BudgetExceeded { what, needed, budget }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }
}
