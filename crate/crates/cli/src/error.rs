use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] elicit_core::Error),

    #[error("simulation disagrees with the analytics on: {0}")]
    Comparison(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 configuration, 3 infeasible design, 4 failed comparison, 5 search too large.
    pub fn exit_code(&self) -> u8 {
        use elicit_core::Error as E;
        match self {
            CliError::Core(E::ThresholdExceeded { .. } | E::Infeasible(_)) => 3,
            CliError::Core(E::Size { .. }) => 5,
            CliError::Comparison(_) => 4,
            CliError::Config(_) | CliError::Core(_) | CliError::Io(_) => 2,
        }
    }
}
