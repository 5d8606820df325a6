use thiserror::Error;

/// Errors raised by the kernel engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("factorization failed: matrix not positive definite after jitter {last_jitter:e}")]
    Factorization { last_jitter: f64 },
    #[error("training failed at step {step}: {reason}")]
    Training { step: usize, reason: String },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            got,
            context,
        })
    }
}
