use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation (bad probabilities, wrong dimensions, labels out of range).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A requested enumeration would exceed its configured budget.
    #[error("budget exceeded: {what} needs {needed} items but the budget is {budget}; {hint}")]
    Budget {
        what: &'static str,
        needed: u128,
        budget: u128,
        hint: &'static str,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Json(_))
    }
}
