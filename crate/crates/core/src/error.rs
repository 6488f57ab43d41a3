use thiserror::Error;

use crate::dsl::ParseError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PkError {
    #[error("split-complex value {re} + {im}τ is a zero divisor and has no inverse")]
    ZeroDivisor { re: f64, im: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("log of non-positive value {value:e}")]
    LogDomain { value: f64 },

    #[error("division by zero")]
    DivisionByZero,

    #[error("non-finite value produced while evaluating {context}")]
    NonFinite { context: &'static str },

    #[error("derivative order {requested} out of range (jet carries order {available})")]
    OrderOutOfRange { requested: usize, available: usize },

    #[error("jet order {requested} exceeds configured cap {cap}")]
    OrderCap { requested: usize, cap: usize },

    #[error("points lie outside the diastasis neighborhood (|<p,q>|^2 = {value:e})")]
    OutsideDiastasisNeighborhood { value: f64 },

    #[error("homogeneous coordinates must satisfy ||Z||^2 > 0, got {value:e}")]
    NonPositiveNorm { value: f64 },

    #[error("degenerate sample set: {context}")]
    DegenerateSamples { context: String },

    #[error("rank not certified <= cap: index set still growing at total order {cap} (size {size})")]
    RankNotCertified { cap: usize, size: usize },

    #[error("not finite-rank within cap: {cap} terms leave residual {residual:e}")]
    NotFiniteRank { cap: usize, residual: f64 },

    #[error("Frobenius compatibility violated: residual {residual:e} at {point:?}")]
    CompatibilityViolation { residual: f64, point: Vec<f64> },

    #[error("integration step underflow ({step:e})")]
    StepUnderflow { step: f64 },

    #[error("singular matrix: {context}")]
    SingularMatrix { context: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = PkError> = std::result::Result<T, E>;
