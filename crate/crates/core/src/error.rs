use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested accuracy level has no finite bound (delta = 1).
    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("no prediction available for an empty run")]
    NoPrediction,

    #[error("privacy budget exhausted")]
    BudgetExhausted,

    #[error("trajectory has fewer than two valid fixes ({valid} valid, {skipped} skipped)")]
    EmptyTrajectory { valid: usize, skipped: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
