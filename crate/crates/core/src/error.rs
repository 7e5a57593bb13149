use thiserror::Error;

/// Errors produced by the estimators, embeddings and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("symmetric eigensolver did not converge for a {dim}x{dim} matrix")]
    NoConvergence { dim: usize },

    #[error("trace must be 1, got {trace}")]
    TraceNotUnit { trace: f64 },

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("feature row {row} is not unit norm (norm {norm})")]
    RowNotUnitNorm { row: usize, norm: f64 },

    #[error("combined mapping requested but the network has no input map")]
    MissingInputMap,

    #[error("mutual-information form requires balanced sets, got N = {n}, M = {m}")]
    Unbalanced { n: usize, m: usize },

    #[error("tape does not match network: {0}")]
    TapeMismatch(String),

    #[error("parameter/gradient shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {what} at epoch {epoch}")]
    NonFinite { epoch: usize, what: String },

    #[error("target divergence {target} outside [0, ln 2)")]
    TargetOutOfRange { target: f64 },

    #[error("insufficient data: need at least {needed} rows, got {rows}")]
    InsufficientData { rows: usize, needed: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ragged rows at line {line}: expected {expected} columns, found {found}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
