use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Fock dimension mismatch: expected n_max = {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not a valid density matrix: {0}")]
    InvalidState(String),

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("invalid process tensor: {0}")]
    InvalidProcess(String),

    #[error("phase undefined: fitted amplitude {amplitude:.3e} is within noise (stderr {stderr:.3e})")]
    UndefinedPhase { amplitude: f64, stderr: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("histogram and POVM disagree: {0}")]
    BinningMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures that indicate a numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositive { .. } | Error::Numeric(_) | Error::InvalidProcess(_)
        )
    }
}
