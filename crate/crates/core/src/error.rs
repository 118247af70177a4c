//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by descriptor construction, model fitting, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: max asymmetry {max_asym:.3e} exceeds {tol:.3e} (dim {dim})")]
    NotSymmetric { dim: usize, max_asym: f64, tol: f64 },

    #[error("matrix is not positive definite{0}")]
    NotPositiveDefinite(String),

    #[error(
        "symmetric eigensolver did not converge: dim {dim}, frobenius norm {frob:.3e}, \
         max |entry| {max_abs:.3e}"
    )]
    EigenNonConvergence { dim: usize, frob: f64, max_abs: f64 },

    #[error("eigenvalue {0:.3} exceeds the exp range for f64 (|lambda| <= 700)")]
    ExpOverflow(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("sparse coding did not converge after {sweeps} sweeps (duality gap {gap:.3e})")]
    SparseCodingNonConvergence { sweeps: usize, gap: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("train/test leakage detected: {0}")]
    Leakage(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("image error ({path}): {reason}")]
    Image { path: String, reason: String },

    #[error("I/O error ({path}): {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("evaluation failed in trial {trial} (split seed {seed}) for method {method}: {source}")]
    Trial {
        trial: usize,
        seed: u64,
        method: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by configuration or I/O rather than computation.
    /// The CLI maps these to exit code 2, everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Dataset(_)
                | Error::Image { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::InvalidSpec(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
