use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("subject alignment error: {0}")]
    Alignment(String),

    #[error("rank-deficient covariates: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("null model did not converge after {iters} iterations (max |score| = {max_score:e}); pass allow_unconverged to proceed")]
    Unconverged { iters: usize, max_score: f64 },

    #[error("no events; score undefined")]
    NoEvents,

    #[error("invalid permutation: {0}")]
    BadPermutation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("event-rate target {target} unattainable; achievable range is ({low:.4}, {high:.4})")]
    UnattainableEventRate { target: f64, low: f64, high: f64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
