use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(frl_core::Error),

    #[error("cannot write outputs: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// Rejected parameter values are configuration errors; everything else the
    /// core reports happened mid-computation.
    pub fn from_validation(err: frl_core::Error) -> Self {
        match err {
            frl_core::Error::InvalidParameter { .. } => CliError::Config(err.to_string()),
            other => CliError::Numerical(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<frl_core::Error> for CliError {
    fn from(err: frl_core::Error) -> Self {
        CliError::Numerical(err)
    }
}
