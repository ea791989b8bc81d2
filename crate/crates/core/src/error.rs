use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FgError {
    #[error("tensor shape {shape:?} implies {expected} entries but data has {actual}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("tensor axis of length zero")]
    EmptyAxis,
    #[error("tensor sum needs at least one operand")]
    NoOperands,
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("witness does not fit graph: {0}")]
    WitnessMismatch(String),
    #[error("UAI parse error: {0}")]
    Parse(String),
    #[error("state space of {size} joint assignments exceeds cap {cap}")]
    StateSpaceTooLarge { size: f64, cap: u64 },
    #[error("assignment invalid: {0}")]
    BadAssignment(String),
}

pub type Result<T> = std::result::Result<T, FgError>;
