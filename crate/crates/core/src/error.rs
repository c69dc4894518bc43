use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is out of range (allowed {allowed})")]
    Range {
        what: &'static str,
        value: String,
        allowed: String,
    },

    #[error("truncation at n_max = {n_max} drops {deficit:.3e} of the population; increase n_max")]
    Truncation { n_max: usize, deficit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("conditioning on an outcome of probability {probability:.3e}")]
    DegenerateCondition { probability: f64 },

    #[error("singular detuning: {0}")]
    Singular(String),

    #[error("no resonance found: {0}")]
    NoResonance(String),

    #[error("adaptive step size underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integration accuracy lost ({0}); reduce the time step")]
    Accuracy(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ill-conditioned fringe fit: {0}")]
    IllConditionedFit(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn range(what: &'static str, value: impl ToString, allowed: impl ToString) -> Self {
        Error::Range {
            what,
            value: value.to_string(),
            allowed: allowed.to_string(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
