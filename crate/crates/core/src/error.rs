use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    /// Iterative process stopped without reaching its tolerance. Carries the
    /// residual history so callers can report it.
    #[error("{what} did not converge after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last: f64,
        residuals: Vec<f64>,
    },

    #[error("negative curvature encountered in conjugate gradients (pAp = {0:.3e})")]
    Indefinite(f64),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown configuration key `{0}`")]
    UnknownConfigKey(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
