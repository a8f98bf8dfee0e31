use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("{func}: {msg}")]
    Domain { func: &'static str, msg: String },

    /// A series or iterative method hit its iteration cap.
    #[error("{func} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        func: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("calibration failed after {iterations} iterations: last delta {last_delta:e} > target {target_delta:e}")]
    Calibration {
        iterations: usize,
        last_delta: f64,
        target_delta: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            func,
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
