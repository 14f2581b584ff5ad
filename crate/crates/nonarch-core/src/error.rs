use thiserror::Error;

/// Errors surfaced by the exact-arithmetic kernels.
///
/// Every fallible operation in this crate reports one of these variants
/// instead of panicking; panics are reserved for internal invariant
/// violations (algorithm bugs), never for bad user input.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not a prime (primes up to 10^6 are supported)")]
    NotPrime(u64),

    #[error("division by zero")]
    DivisionByZero,

    #[error("zero has no inverse and no finite power with negative exponent")]
    ZeroToNegativePower,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dimension {0} exceeds the supported cap of {1}")]
    DimensionCap(usize, usize),

    #[error("matrix is singular (rank-deficient input where full rank is required)")]
    Singular,

    #[error("operands live over different prime fields: p={0} vs p={1}")]
    FieldMismatch(u64, u64),

    #[error("seminorms have different kernels; comparison requires a common stratum")]
    StratumMismatch,

    #[error("support size {0} exceeds the cap of {1} for this operation")]
    SupportCap(usize, usize),

    #[error("measures live on different metric spaces")]
    SpaceMismatch,

    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(String, String),

    #[error("point is not in the space or map is undefined at it: {0}")]
    UndefinedPoint(String),

    #[error("fibration is invalid: {0}")]
    InvalidFibration(String),

    #[error("value is not exactly representable on the integer exponent grid: {0}")]
    OffGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
