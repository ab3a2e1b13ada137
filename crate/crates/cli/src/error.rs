use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dpa_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    /// 1 for bad input of any kind, 2 for failures the input cannot explain.
    pub fn exit_code(&self) -> i32 {
        use dpa_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Core(e) => match e {
                E::SingularStep { .. } | E::ZeroPredictedVariance(_) => 2,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Json { .. } => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
