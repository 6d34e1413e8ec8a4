use koopman_turbine::Error as CoreError;
use thiserror::Error;

/// Command failures, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Divergence { .. }
            | CoreError::TrainingDiverged { .. }
            | CoreError::PlantFailure { .. }
            | CoreError::SpeedFloor { .. } => CliError::Numerical(msg),
            CoreError::InvalidInput(_) | CoreError::InvalidRange { .. } => CliError::Config(msg),
            CoreError::Io(_) => CliError::Other(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_failure_class() {
        assert_eq!(CliError::from(CoreError::Divergence { step: 3 }).exit_code(), 4);
        assert_eq!(CliError::from(CoreError::TrainingDiverged { epoch: 1 }).exit_code(), 4);
        assert_eq!(CliError::from(CoreError::DegenerateChannel("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(CoreError::InvalidRange { low: 1.0, high: 0.0 }).exit_code(), 2);
    }
}
