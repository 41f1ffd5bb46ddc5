use thiserror::Error;

/// Errors produced by the problem oracles, the solvers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A rate is outside the open positive orthant where the utility is defined.
    #[error("rate x[{index}] = {value} is outside the utility domain (must be > 0)")]
    Domain { index: usize, value: f64 },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    /// An instance violates one of its invariants; the message names the first one found.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "no productive steps recorded; the dual radius R is probably too small \
         (the iterates never entered the interior of the 2R-ball), retry with a larger radius"
    )]
    NoProductiveSteps,

    #[error("ellipsoid shape matrix became singular at iteration {iteration}; restart with a larger radius")]
    SingularEllipsoid { iteration: u64 },

    #[error("could not draw a nonzero routing column for user {user} in {attempts} attempts")]
    GenerationFailed { user: usize, attempts: usize },

    #[error("reference oracle refuses instances larger than n <= {max_n}, m <= {max_m} (got n = {n}, m = {m})")]
    OracleRefused {
        n: usize,
        m: usize,
        max_n: usize,
        max_m: usize,
    },

    #[error("reference oracle found no KKT-consistent active set")]
    NoKktPoint,

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
