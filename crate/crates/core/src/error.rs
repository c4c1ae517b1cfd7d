use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precision of {0} bits is below the 64-bit minimum")]
    Precision(u32),
    #[error("cannot parse {0:?} as a real number")]
    Parse(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("certificate construction defect: {0}")]
    Construction(String),
    #[error("iterate became non-finite at step {index}")]
    Divergence { index: u64 },
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
