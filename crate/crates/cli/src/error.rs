use deepck_core::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Exit code 3.
    #[error("data error: {0}")]
    Data(String),
    /// Exit code 4.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    /// Reclassifies a core error raised while checking configuration values.
    pub fn config(e: Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::Saturation { .. }
            | Error::Taxonomy(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => CliError::Data(msg),
            Error::ContextOverflow { .. }
            | Error::Capability { .. }
            | Error::UndefinedCorrelation(_)
            | Error::Assembly(_)
            | Error::NonFiniteLoss { .. }
            | Error::Checkpoint(_) => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
