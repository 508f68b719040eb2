use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown point index {0}")]
    UnknownPoint(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("metric axiom violated: {0}")]
    MetricViolation(String),

    #[error("subset is empty")]
    EmptySubset,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("every requested scale is below the resolution of the space")]
    NoUsableScales,

    #[error("coordinate spread is rank-deficient; degenerate direction {direction:?}")]
    RankDeficient { direction: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("missing value at lattice vertex {0:?}")]
    MissingVertex(Vec<i64>),

    #[error("solver stopped after {iterations} iterations with duality gap {gap:e}")]
    NotConverged {
        iterations: usize,
        gap: f64,
        /// Best feasible iterate found before stopping.
        best: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
