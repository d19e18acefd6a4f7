use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is numerically singular (condition number {0:e})")]
    Singular(f64),

    #[error("ratio M/tau undefined: tau is zero")]
    ZeroThreshold,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("label channel `{0}` not present in dataset")]
    MissingLabels(&'static str),

    #[error("loss became non-finite or rose at iteration {iteration} after {restarts} learning-rate halvings")]
    Diverged { iteration: usize, restarts: usize },

    #[error("target mislabel fraction {target} unreachable; achievable range [{low}, {high}]")]
    Infeasible { target: f64, low: f64, high: f64 },

    #[error("dimension {dim} exceeds the reference solver limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
