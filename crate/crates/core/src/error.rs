use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("trace {0} differs from 1")]
    BadTrace(f64),

    #[error("map is not trace preserving (deviation {0:.3e})")]
    NotTracePreserving(f64),

    #[error("scalar function undefined at eigenvalue {0}")]
    FunctionDomain(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("slot {slot} out of range 1..={max}")]
    SlotOutOfRange { slot: usize, max: usize },

    #[error("slots must be strictly increasing: {0:?}")]
    UnorderedSlots(Vec<usize>),

    #[error("too many open slots: Choi dimension {0} exceeds 2^16")]
    TooManyOpenSlots(usize),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("pulse pattern is empty")]
    EmptyPattern,

    #[error("block size {block} does not divide {total}")]
    NonDividingBlock { block: usize, total: usize },

    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SDP solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    SolverNonConvergence { iterations: usize, gap: f64 },

    #[error("malformed container: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
