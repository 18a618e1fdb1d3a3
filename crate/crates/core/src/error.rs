use std::path::PathBuf;

/// Errors raised by model construction, the solver, the simulator and the
/// file loaders.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid transition matrix at row {row}, column {col}: {reason}")]
    InvalidTransition { row: usize, col: usize, reason: String },

    #[error("steady state did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid sample at row {row}: {reason}")]
    InvalidSample { row: usize, reason: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("all angles are unencoded")]
    AllUnencoded,

    #[error("stream {stream} has zero multiplier weight (gamma = 0)")]
    ZeroGamma { stream: usize },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 2,
            Error::NoConvergence { .. } | Error::Numerical(_) | Error::ZeroGamma { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
