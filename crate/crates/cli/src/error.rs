use serde_json::json;

/// Exit status for a configuration or usage error.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a failure while running.
pub const EXIT_RUNTIME: i32 = 3;
/// Exit status when the acceptance suite ran but a criterion failed.
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sqm_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid input file {path}: {message}")]
    Input { path: String, message: String },
    #[error("{failed} of {total} acceptance criteria failed")]
    Acceptance { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Acceptance { .. } => EXIT_ACCEPTANCE,
            _ => EXIT_RUNTIME,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(_) => "model",
            CliError::Io(_) => "io",
            CliError::Csv(_) | CliError::Json(_) | CliError::Input { .. } => "input",
            CliError::Acceptance { .. } => "acceptance",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}
