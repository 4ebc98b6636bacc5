use thiserror::Error;

/// Failures that end a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or an invalid config. Exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    /// Input data could not be processed. Exit code 1.
    #[error("{0}")]
    Data(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Data(_) | Self::Io { .. } => 1,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| Self::Io { context, source }
    }
}
