use thiserror::Error;
use zosd_core::ErrorClass;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    MissingData(String),
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Core(#[from] zosd_core::Error),
}

impl CliError {
    /// 0 success, 1 configuration error, 2 missing data, 3 internal invariant
    /// violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::MissingData(_) => 2,
            CliError::Internal(_) => 3,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::MissingData => 2,
                ErrorClass::Invariant => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
