use std::fmt;

use execution_game::equilibrium::SolveError;
use execution_game::stage::StageError;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    NotConverged(String),
    Stage(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Stage(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::NotConverged(_) => "not_converged",
            CliError::Stage(_) => "stage_failure",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::NotConverged(m) | CliError::Stage(m) | CliError::Io(m) => m,
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn diagnostic(&self) -> String {
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidParams(_) | SolveError::InvalidOptions(_) => CliError::Validation(e.to_string()),
            SolveError::NotConverged { .. } => CliError::NotConverged(e.to_string()),
            SolveError::Stage { .. } | SolveError::LengthMismatch(..) => CliError::Stage(e.to_string()),
        }
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        CliError::Stage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
