use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} exceeds {limit:.1e}")]
    NotSymmetric { asymmetry: f64, limit: f64 },

    #[error("eigensolver did not converge for a {size}x{size} matrix")]
    EigenNonConvergence { size: usize },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:.6e} at or below {threshold:.1e}")]
    NotPositiveDefinite { eigenvalue: f64, threshold: f64 },

    #[error("shape mismatch in {context}: expected {expected}, got {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("{count} pooled outputs cannot be split into {groups} equal groups")]
    BadGrouping { count: usize, groups: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("training failed in stage {stage} at iteration {iteration}: {reason}")]
    Training {
        stage: usize,
        iteration: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
