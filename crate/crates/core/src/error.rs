use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("solver aborted at x = {x:.6e}: {reason}")]
    SolverAbort { x: f64, reason: String },

    #[error("regime oscillation: {count} switches exceeded the limit of {limit} (last at x = {x:.6e})")]
    SwitchOscillation { count: usize, limit: usize, x: f64 },

    #[error("step size underflow at x = {x:.6e} (h = {h:.3e})")]
    StepUnderflow { x: f64, h: f64 },

    #[error("bracket failure locating a regime switch near x = {x:.6e}")]
    BracketFailure { x: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn abort(x: f64, reason: impl Into<String>) -> Self {
        Error::SolverAbort {
            x,
            reason: reason.into(),
        }
    }
}
