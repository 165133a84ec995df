use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("schema mismatch: expected {expected} covariates, got {got}")]
    Schema { expected: usize, got: usize },
    #[error("no relapse events in training data; rate is unidentified")]
    NoEvents,
    #[error("covariates are collinear: {0}")]
    Collinear(String),
    #[error("monotone likelihood: coefficient norm {norm:.1} exceeds {limit}")]
    MonotoneLikelihood { norm: f64, limit: f64 },
    #[error("MCMC initialization failed: {0}")]
    Init(String),
    #[error("split failed: {0}")]
    Split(String),
    #[error("patient `{0}` was in the training set of the model that predicted it")]
    Leakage(String),
    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
    #[error("fold {fold}, method {method}: {source}")]
    Fold {
        fold: usize,
        method: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
