use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate edge between variable {var} and check {check}")]
    DuplicateEdge { var: usize, check: usize },

    #[error("enumeration needs 2^{needed_log2} states but the budget is 2^{budget_log2}")]
    Capacity { needed_log2: u32, budget_log2: u32 },

    #[error("dual partition function is degenerate (log|Z_G| = {log_abs_z}, condition estimate {condition:e})")]
    DegenerateRatio { log_abs_z: f64, condition: f64 },

    #[error("inconsistent ensemble: {0}")]
    InconsistentEnsemble(String),

    #[error("tree neighborhoods too rare: accepted {accepted} of {attempts} sampled neighborhoods")]
    TreesTooRare { accepted: usize, attempts: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn is_capacity(&self) -> bool {
        matches!(self, Error::Capacity { .. })
    }
}
