use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("matrix is numerically singular or not positive definite: {0}")]
    Singular(&'static str),

    #[error("simulation diverged at step {step}: non-finite {quantity}")]
    Divergence { step: usize, quantity: &'static str },

    #[error("observation {obs} has zero probability under the current belief")]
    ImpossibleObservation { obs: usize },

    #[error("plan enumeration needs {count} plans, above the budget of {budget}")]
    EnumerationBudget { count: u128, budget: usize },

    #[error("score function returned a non-finite value for sample {sample}")]
    NonFiniteScore { sample: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
