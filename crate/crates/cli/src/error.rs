use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("{path}: {source}")]
    Input {
        path: String,
        #[source]
        source: qdev_core::Error,
    },
    #[error(transparent)]
    Analysis(#[from] qdev_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn parse(path: &str, line: u64, msg: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_string(), line, msg: msg.into() }
    }

    pub(crate) fn input(path: &str, source: qdev_core::Error) -> Self {
        CliError::Input { path: path.to_string(), source }
    }
}
