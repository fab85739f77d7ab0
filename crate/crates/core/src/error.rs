use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("context overflow: {len} tokens exceed the window of {window}")]
    ContextOverflow { len: usize, window: usize },

    #[error("backend `{backend}` does not support {capability}")]
    Capability {
        backend: String,
        capability: &'static str,
    },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("input assembly failed: {0}")]
    Assembly(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("negative sampling saturated: no unseen triple after {attempts} attempts")]
    Saturation { attempts: usize },

    #[error("taxonomy: {0}")]
    Taxonomy(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
