use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Threshold(String),

    #[error("{0}")]
    Solver(String),

    #[error(transparent)]
    Core(#[from] panda::Error),
}

impl CliError {
    /// 1 threshold failure, 2 usage or config error, 3 solver failure.
    pub fn exit_code(&self) -> ExitCode {
        use panda::Error as E;
        let code = match self {
            CliError::Threshold(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Core(e) => match e {
                E::SolverDiverged { .. }
                | E::EstimatorInfeasible(_)
                | E::TuningFailed(_)
                | E::DegenerateRule
                | E::IllConditioned { .. }
                | E::NotPositiveDefinite { .. } => 3,
                _ => 2,
            },
        };
        ExitCode::from(code)
    }
}
