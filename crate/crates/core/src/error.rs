use thiserror::Error;

/// Errors raised by the testbench.
#[derive(Debug, Error)]
pub enum CzError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cube at level {level} is not aligned with the depth-{depth} lattice")]
    NotAligned { level: u32, depth: u32 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel evaluated on the diagonal x = y")]
    DiagonalPoint,

    #[error("kernel is not scale invariant (relative deviation {0:e})")]
    NotScaleInvariant(f64),

    #[error("zero mass: {0}")]
    ZeroMass(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("operator needs {needed} bytes, budget is {budget} bytes")]
    MemoryBudget { needed: usize, budget: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("measure file, line {line}: {message}")]
    MeasureFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CzError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CzError::InvalidArgument(msg.into()))
}
