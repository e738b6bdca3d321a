use thiserror::Error;

/// Errors produced by corpus handling, solvers, and the learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("infeasible problem: no coefficients satisfy the equality constraints within {tolerance:e}")]
    Infeasible { tolerance: f64 },

    #[error("solver made no progress after {iterations} iterations")]
    NumericalFailure { iterations: usize },

    #[error(
        "instance too large for exhaustive enumeration: {candidates} basis candidates (budget {budget})"
    )]
    OracleTooLarge { candidates: u128, budget: u128 },

    #[error("hyperedge {edge:?} has nonpositive weight {weight}")]
    NonpositiveWeight { edge: String, weight: f64 },

    #[error("vertex {vertex:?} has zero hypergraph degree")]
    ZeroVertexDegree { vertex: String },

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Whether the error stems from bad input (file contents, argument values)
    /// rather than a failure while computing. Callers use this to pick exit codes.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidCorpus(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch(_)
                | Error::NonpositiveWeight { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
