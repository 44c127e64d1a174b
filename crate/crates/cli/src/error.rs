use std::path::PathBuf;

use msqg_core::MsqgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {}: {source}", path.display())]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {}: {message}", path.display())]
    ConfigParse { path: PathBuf, message: String },
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Core(#[from] MsqgError),
}

impl CliError {
    /// 2 for anything the user can fix in the inputs, 3 for numeric breakdown.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(MsqgError::Numeric(_) | MsqgError::StepRejected { .. }) => 3,
            _ => 2,
        }
    }
}
