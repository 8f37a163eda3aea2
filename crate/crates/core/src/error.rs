use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0} lies outside [0, 1]")]
    Domain(f64),

    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("index {index} is past the end of a schedule of length {len}")]
    Index { index: usize, len: usize },

    #[error("power iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("grid breakdown at x = {x:e}: denominator {value:e} below floor {floor:e}")]
    GridBreakdown { x: f64, value: f64, floor: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
