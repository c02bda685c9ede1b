use pgpr_core::GpError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Core(#[from] GpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            CliError::Core(e) if is_numerical(e) => 3,
            _ => 2,
        }
    }
}

pub fn is_numerical(e: &GpError) -> bool {
    matches!(
        e,
        GpError::FactorizationFailed { .. } | GpError::NonFinite { .. } | GpError::NonpositiveVariance(_)
    )
}

pub fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}
