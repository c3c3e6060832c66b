use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {target} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { target: usize, n_qubits: usize },

    #[error("key covers {actual} qubits but the target holds {expected}")]
    KeyLengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("matrix is not unitary (deviation {0:e})")]
    NonUnitary(f64),

    #[error("ensembles have different density matrices (max deviation {0:e}), so no cheat unitary exists")]
    DensitiesDiffer(f64),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
