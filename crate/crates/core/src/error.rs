use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("zero denominator")]
    ZeroDenominator,

    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    /// One entry per violated system assumption, e.g. `"B not monic"`.
    #[error("invalid system: {}", .0.join("; "))]
    InvalidSystem(Vec<String>),

    #[error("pair (A, B) is not controllable")]
    Uncontrollable,

    #[error("expected {expected} poles, got {found}")]
    PoleCountMismatch { expected: usize, found: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
