use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid subspace: k = {k} must satisfy 1 <= k < n = {n}")]
    InvalidSubspace { k: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    #[error("log-domain range exceeded: {0}")]
    Range(String),

    #[error("outside guarantee domain: {0}")]
    OutOfGuaranteeDomain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("degenerate posterior: noise variance must be positive (use ML sequence detection instead)")]
    DegeneratePosterior,

    #[error("no wave: {0}")]
    NoWave(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed frame file: {0}")]
    MalformedFrame(String),
}

pub type Result<T> = std::result::Result<T, Error>;
