use fg_core::FgError;
use fg_models::ModelError;
use fg_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Graph(#[from] FgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::BadInput(_) => "bad_input",
            CliError::Graph(_) => "graph",
            CliError::Model(_) => "model",
            CliError::Nn(_) => "nn",
        }
    }

    /// One-line JSON document for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({"error": self.kind(), "message": self.to_string()}).to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
