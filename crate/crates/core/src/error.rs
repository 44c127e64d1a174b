use thiserror::Error;

/// Failure categories shared by every module of the crate.
///
/// The variants map onto the command-line exit codes: configuration
/// problems are reported as 2, numeric breakdowns as 3.
#[derive(Debug, Error)]
pub enum MsqgError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("step rejected at t = {time}: CFL number {cfl:.3} exceeds {limit}; try dt <= {suggested_dt:e}")]
    StepRejected {
        time: f64,
        cfl: f64,
        limit: f64,
        suggested_dt: f64,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MsqgError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        MsqgError::Config(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        MsqgError::Domain(msg.into())
    }
    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        MsqgError::Numeric(msg.into())
    }
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        MsqgError::Data(msg.into())
    }
    pub(crate) fn range(msg: impl Into<String>) -> Self {
        MsqgError::Range(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, MsqgError>;
