use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] shiftcal_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("config: {0}")]
    Config(String),

    /// The bound failed on at least one instance; the payload says where.
    #[error("bound violated: {0}")]
    BoundViolation(String),

    /// Some runs failed; the others were written.
    #[error("{failed} of {total} runs failed; first error: {first}")]
    PartialFailure {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.into(),
            source,
        }
    }

    /// 2 for a bound violation, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BoundViolation(_) => 2,
            _ => 1,
        }
    }
}
