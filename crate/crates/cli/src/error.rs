use thiserror::Error;

/// Failures with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("hypothesis check could not run: {0}")]
    Check(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("region-of-attraction estimate failed: {0}")]
    Roa(String),
    #[error("linearization failed: {0}")]
    Eigen(String),
    #[error("invariance probe failed: {0}")]
    Probe(String),
    #[error("periodic-orbit computation failed: {0}")]
    Periodic(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 2,
            CliError::Integration(_) => 3,
            CliError::Roa(_) => 4,
            CliError::Eigen(_) => 5,
            CliError::Probe(_) => 6,
            CliError::Periodic(_) => 7,
            CliError::Config(_) => 64,
            CliError::Io(_) => 74,
        }
    }
}
