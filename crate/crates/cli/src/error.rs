use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Lib(#[from] tensorview::Error),

    #[error("deviation {deviation:e} exceeds tolerance {tolerance:e}")]
    Tolerance { deviation: f64, tolerance: f64 },

    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 1 validation, 2 I/O, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        use tensorview::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(E::Io { .. }) | CliError::Output(_) => 2,
            CliError::Lib(E::Numeric(_)) | CliError::Tolerance { .. } => 3,
            CliError::Lib(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
