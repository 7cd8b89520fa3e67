use crate::tree::TypeId;

/// Errors shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Model(String),

    #[error("type {0} is not part of the type set")]
    UnknownType(TypeId),

    #[error("tree exceeded the generation cap of {cap} vertices; the model is possibly non-extinct")]
    PossiblyNonExtinct { cap: usize },

    #[error("rejection budget exhausted after {attempts} attempts ({accepted} accepted, acceptance rate estimate {rate:.3e})")]
    BudgetExhausted { attempts: u64, accepted: u64, rate: f64 },

    #[error("conditioning event is unreachable: {0}")]
    Unreachable(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("operation needs exact rational offspring laws: {0}")]
    NotExact(String),

    #[error("weight series diverge at x = {x}, y = {y}")]
    Divergence { x: f64, y: f64 },

    #[error("no admissible solution: {0}")]
    NotAdmissible(String),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
