use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {stage} at step {step}: {detail}")]
    Numerical {
        stage: &'static str,
        step: usize,
        detail: String,
    },

    #[error("scoring failed: {0}")]
    Scoring(String),

    #[error("mining failed: {0}")]
    Mining(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("retrieval failed: {0}")]
    Retrieval(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
