use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A user profile, market process, or experiment config is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Realized quantities contradicted the user model (e.g. load above `l_max`).
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// Both prices were zero, so the day-ahead/real-time ratio is undefined.
    #[error("degenerate pricing: day-ahead and expected real-time prices are both zero")]
    DegeneratePricing,

    /// A controller invariant failed during simulation.
    #[error("invariant violation on day {day}, slot {slot}: {detail}")]
    InvariantViolation {
        day: u64,
        slot: usize,
        detail: String,
    },

    /// An exhaustive search would exceed its configured budget.
    #[error("enumeration budget exceeded: {required} evaluations required, cap is {cap}")]
    BudgetExceeded { required: u128, cap: u128 },

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("linear program: {0}")]
    Lp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
