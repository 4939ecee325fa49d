use thiserror::Error;

/// Errors raised by the library. Every fallible operation returns [`Result`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HkError {
    #[error("non-finite frequency: {0}")]
    NonFinite(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    /// The enumeration or sampling budget ran out. `work` is the amount of
    /// work that was completed before giving up.
    #[error("work budget of {budget} exceeded after {work} steps ({context})")]
    BudgetExceeded {
        budget: u64,
        work: u64,
        context: String,
    },

    #[error("aliasing: {points} sample points cannot resolve frequencies up to {required}")]
    Aliasing { points: u64, required: u64 },

    /// A numerical method could not reach the requested tolerance.
    #[error(
        "tolerance {requested:e} not reached; best estimate {estimate} with error {achieved:e}"
    )]
    ToleranceNotReached {
        requested: f64,
        achieved: f64,
        estimate: f64,
    },

    #[error("not a valid h-profile: {0}")]
    InvalidProfile(String),

    #[error("estimate did not converge: {0}")]
    NotConverged(String),
}

impl HkError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HkError::InvalidInput(msg.into())
    }

    pub(crate) fn budget(budget: u64, work: u64, context: impl Into<String>) -> Self {
        HkError::BudgetExceeded {
            budget,
            work,
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, HkError>;
