use fg_core::FgError;
use fg_nn::NnError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("variable {var} has cardinality {actual}, model expects {expected}")]
    CardinalityMismatch {
        var: usize,
        expected: usize,
        actual: usize,
    },
    #[error("missing label: {0}")]
    MissingLabel(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Graph(#[from] FgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
