use thiserror::Error;

/// Errors raised while building a problem. Solver outcomes are reported
/// through [`crate::SolveStatus`] instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("block expression has no blocks")]
    EmptyBlock,
    #[error("block rows have different lengths")]
    RaggedBlock,
    #[error("constraint `{name}` is not square: {rows}x{cols}")]
    NotSquare { name: String, rows: usize, cols: usize },
    #[error("constraint `{name}` is asymmetric (max deviation {deviation:e})")]
    Asymmetric { name: String, deviation: f64 },
    #[error("objective must be a 1x1 expression, got {0:?}")]
    ObjectiveShape((usize, usize)),
    #[error("expression references unknown scalar {0}")]
    UnknownVariable(usize),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("problem has {count} scalar unknowns, limit is {limit}")]
    TooLarge { count: usize, limit: usize },
}
