use thiserror::Error;

/// Errors raised by the verification engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires a non-empty box")]
    EmptyBox,

    #[error("constraint normal vector is zero")]
    ZeroNormal,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid property: {0}")]
    InvalidProperty(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// The split assignments (or tightened bounds) admit no input point.
    #[error("split assignment is infeasible at layer {layer}, neuron {neuron}")]
    InfeasibleSplit { layer: usize, neuron: usize },

    #[error("unsupported split point {0}; only ReLU splits at 0 are supported")]
    UnsupportedSplitPoint(f64),

    #[error("cannot branch: {0}")]
    CannotBranch(String),

    #[error("oracle budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("oracle inconsistency: {0}")]
    OracleInconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
