use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is indefinite beyond tolerance: {what} (min eigenvalue {min_eigenvalue:e})")]
    Indefinite { what: String, min_eigenvalue: f64 },

    #[error("fixed point for cell {cell} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        cell: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite SINR in drop {drop}, block {block}, cell {cell}, UE {ue}")]
    NonFiniteSinr {
        drop: usize,
        block: usize,
        cell: usize,
        ue: usize,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::NonConvergence { .. } => 3,
            Error::Io(_) | Error::Serialization(_) => 4,
            Error::NotPositiveDefinite(_) | Error::Indefinite { .. } | Error::NonFiniteSinr { .. } => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
