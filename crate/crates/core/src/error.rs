use thiserror::Error;

/// Errors surfaced by the library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),

    #[error("frequency cap must be at least 1")]
    InvalidCap,

    /// Scalar parameter outside its admissible range (epsilon, lambda, ...).
    #[error("{0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    /// Row extension skipped over a trial count that was never built.
    #[error("binomial table has no row for n = {missing}; rows are built in order (largest built: {last})")]
    TableGap { missing: u64, last: u64 },

    #[error("unknown group index {0}")]
    UnknownGroup(usize),

    #[error("operation requires non-overlapping groups")]
    OverlappingGroups,

    #[error("coverage is undefined: no group contains a targeted user")]
    NoTargetedUsers,

    #[error("invalid property vector: {0}")]
    PropertyVector(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
