use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("impulse {index} at t = {time} is not a node of the time grid")]
    ImpulseNotOnGrid { index: usize, time: f64 },

    #[error("control breakpoint t = {0} is not a node of the time grid")]
    BreakpointNotOnGrid(f64),

    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("running cost is not finite at t = {t} on path {path}")]
    NonFiniteCost { t: f64, path: u64 },

    #[error("callback failed: {0}")]
    Callback(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
