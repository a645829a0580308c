use thiserror::Error;

/// Errors raised by the planning library.
#[derive(Debug, Error)]
pub enum Error {
    /// One or more scenario checks failed; each entry is a human-readable diagnostic.
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("range must be positive, got {0}")]
    NonPositiveRange(f64),

    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectories do not share a common final time ({0} s vs {1} s)")]
    MismatchedFinalTime(f64, f64),

    #[error("no lateral offset reaches single-pass detection probability {0}")]
    SensorTooWeak(f64),

    #[error("residual risk {achieved:.4} still above {target} after {legs} legs")]
    RiskUnreachable {
        target: f64,
        achieved: f64,
        legs: usize,
    },

    #[error("state integration produced a non-finite value")]
    NonFiniteState,

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
