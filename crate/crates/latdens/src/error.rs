use thiserror::Error;

/// Shared error type for all lattice computations.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("gram matrix is singular")]
    SingularGram,
    #[error("lattice is not integral: entry ({row},{col}) has negative valuation")]
    NotIntegral { row: usize, col: usize },
    #[error("prime contexts do not match: {0} vs {1}")]
    CtxMismatch(u64, u64),
    #[error("zero argument to Hilbert symbol")]
    ZeroArgument,
    #[error("no quadratic space with the requested invariants: {0}")]
    Inadmissible(String),
    #[error("subspace is degenerate")]
    DegenerateSubspace,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("{0} is not an odd prime")]
    BadPrime(u64),
    #[error("computation budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("empirical density did not stabilize; raw counts: {raw_counts:?}")]
    NotStabilized { raw_counts: Vec<String> },
    #[error("identity violated: {witness}")]
    IdentityViolated { witness: String },
    #[error("functional-equation sign is +1; central derivative identity needs sign -1")]
    WrongSign,
    #[error("input outside guarded range: {0} (use force to override)")]
    GuardTripped(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
