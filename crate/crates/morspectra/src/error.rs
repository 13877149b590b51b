use thiserror::Error;

/// Errors produced by pencil construction, solvers, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix {name} is not symmetric: max asymmetry {max_asym:.3e} exceeds {tol:.3e} (relative)")]
    NotSymmetric {
        name: &'static str,
        max_asym: f64,
        tol: f64,
    },

    #[error("matrix {name} is not positive definite: smallest eigenvalue {min_eig:.6e}")]
    NotPositiveDefinite { name: &'static str, min_eig: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear solver did not converge: {unconverged} of {total} columns unconverged")]
    SolverNotConverged { unconverged: usize, total: usize },

    #[error("residual stagnation for shift {shift}: likely (near-)singular system")]
    SingularShift { shift: String },

    #[error("reduced system is singular at shift {shift}")]
    SingularReducedSystem { shift: String },

    #[error("basis is empty: all candidate columns were deflated")]
    EmptyBasis,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("matrix market parse error in {path}: {msg}")]
    MatrixMarket { path: String, msg: String },

    #[error("csv parse error in {path}: {msg}")]
    Csv { path: String, msg: String },

    #[error("linear algebra backend error: {0}")]
    Lapack(#[from] ndarray_linalg::error::LinalgError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
