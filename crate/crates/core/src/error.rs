//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Errors raised by mesh handling, assembly, solves and the optimization loop.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("malformed mesh file {path}: {msg}")]
    MeshFormat { path: PathBuf, msg: String },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid kernel specification: {0}")]
    Kernel(String),

    #[error("singular kernel evaluated at coincident points")]
    CoincidentPoints,

    #[error("triangle {tri} is inverted or degenerate (signed area {area:e})")]
    InvertedElement { tri: usize, area: f64 },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("relative residual {residual:e} exceeds {tol:e}")]
    Residual { residual: f64, tol: f64 },

    #[error("iterative solver stopped after {iterations} iterations at relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Newton system is not symmetric positive definite")]
    NotSpd,

    #[error("point ({x}, {y}) lies outside the source mesh")]
    OutsideMesh { x: f64, y: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
