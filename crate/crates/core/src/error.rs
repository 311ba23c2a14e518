use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("all-zero input has no relative tolerance")]
    ZeroTensor,

    #[error("dense size {requested} exceeds cap {cap}")]
    DenseCapExceeded { requested: usize, cap: usize },

    #[error("Newton-Schulz did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("TT rank {rank} exceeds cap {cap} ({context})")]
    RankCapExceeded {
        rank: usize,
        cap: usize,
        context: &'static str,
    },

    #[error("filter collapsed at step {step}: density norm {norm:e}")]
    FilterCollapse { step: usize, norm: f64 },

    #[error("nonpositive mass {mass:e}")]
    NonPositiveMass { mass: f64 },

    #[error("particle weights degenerated at step {step}")]
    WeightDegeneracy { step: usize },

    #[error("EKF diverged at step {step}: {reason}")]
    EkfDivergence { step: usize, reason: String },

    #[error("dense linear algebra failure: {0}")]
    Linalg(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is numerical (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::RankCapExceeded { .. }
                | Error::FilterCollapse { .. }
                | Error::NonPositiveMass { .. }
                | Error::WeightDegeneracy { .. }
                | Error::EkfDivergence { .. }
                | Error::Linalg(_)
                | Error::ZeroTensor
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
