use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("acceptance check failed: {0}")]
    Assert(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error(transparent)]
    Lib(#[from] ldpclab::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use ldpclab::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Assert(_) => 4,
            CliError::Capacity(_) => 3,
            CliError::Lib(E::Capacity { .. }) => 3,
            CliError::Lib(
                E::InvalidInput(_) | E::Parse { .. } | E::InconsistentEnsemble(_) | E::DuplicateEdge { .. },
            ) => 2,
            CliError::Lib(_) | CliError::Other(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
