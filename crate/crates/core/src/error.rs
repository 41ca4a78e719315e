use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum MeraError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("lookup error: no parameter named `{0}`")]
    Lookup(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("build error: {0}")]
    Build(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("retrieval error: {0}")]
    Retrieval(String),
    #[error("norm error: {0}")]
    Norm(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MeraError {
    pub fn format(offset: usize, message: impl Into<String>) -> Self {
        MeraError::Format {
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        MeraError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data/format, 3 numerical/training.
    pub fn exit_code(&self) -> i32 {
        match self {
            MeraError::Parameter(_) | MeraError::Config(_) => 1,
            MeraError::Dimension(_)
            | MeraError::EmptyInput(_)
            | MeraError::Lookup(_)
            | MeraError::Build(_)
            | MeraError::Ingestion(_)
            | MeraError::Retrieval(_)
            | MeraError::Norm(_)
            | MeraError::Format { .. }
            | MeraError::Io { .. } => 2,
            MeraError::Contract(_)
            | MeraError::Evaluation(_)
            | MeraError::UndefinedMetric(_)
            | MeraError::Training(_)
            | MeraError::Internal(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, MeraError>;
