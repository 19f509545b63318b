use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty: no interaction records")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no eligible investors: holdout needs at least one investor with two or more distinct interactions")]
    NoEligibleInvestors,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("conjugate gradient breakdown at step {step}: {detail}")]
    CgBreakdown { step: usize, detail: String },

    #[error("{kind} index {index} out of range (len {len})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error("iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid point (factors={factors}, iterations={iterations}, lambda={lambda}): {source}")]
    GridPoint {
        factors: usize,
        iterations: usize,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
