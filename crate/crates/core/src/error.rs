use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OuqError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("parameter vector has length {got}, layout expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("evaluation failed at {point:?}: {reason}")]
    Evaluation { point: Vec<f64>, reason: String },
    #[error("syntax error at offset {offset}: expected one of {expected:?}, found {found}")]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` takes {expected} argument(s), got {got} (offset {offset})")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        offset: usize,
    },
    #[error("negative diameter D[{index}] = {value}")]
    NegativeDiameter { index: usize, value: f64 },
    #[error("unsupported dimension m = {m}: {reason}")]
    UnsupportedDimension { m: usize, reason: String },
    #[error("constraint #{index} cannot be reduced: {reason}")]
    Irreducible { index: usize, reason: String },
    #[error("infeasible: best constraint residual {best_residual:.3e}")]
    Infeasible { best_residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, OuqError>;
