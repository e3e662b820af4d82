use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HsaError {
    #[error("attempted to invert zero")]
    ZeroInverse,

    #[error("{0} is not a prime")]
    NotPrime(u64),

    #[error("modulus {0} is too large (must be below 2^32)")]
    ModulusTooLarge(u64),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("configuration (U={u}, V={v}, T={t}) is infeasible: T >= (U-1)V = {boundary}")]
    Infeasible {
        u: usize,
        v: usize,
        t: usize,
        boundary: usize,
    },

    #[error(
        "no valid gamma found for any prime up to {last_q}; next prime to try is {next_prime}"
    )]
    SearchExhausted { last_q: u64, next_prime: u64 },

    #[error("correctness violation: {0}")]
    CorrectnessViolation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("budget exceeded: {required} operations required, cap is {cap}")]
    BudgetExceeded { required: u128, cap: u128 },
}

impl From<serde_json::Error> for HsaError {
    fn from(e: serde_json::Error) -> Self {
        HsaError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HsaError>;
