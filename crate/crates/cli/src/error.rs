use serde::Serialize;
use thiserror::Error;

/// Failure of a CLI run, carrying its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flags or output location. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// A numerical solve failed. Exit code 3.
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn solver(e: impl std::fmt::Display) -> Self {
        CliError::Solver(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
        }
        let kind = match self {
            CliError::Validation(_) => "validation",
            CliError::Solver(_) => "solver",
        };
        serde_json::to_string(&Report {
            error: kind,
            exit_code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("error report serializes")
    }
}

pub(crate) fn io(e: std::io::Error, what: &std::path::Path) -> CliError {
    CliError::validation(format!("{}: {e}", what.display()))
}
