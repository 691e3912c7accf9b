use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0}; only 2 and 4 are supported")]
    UnsupportedDimension(usize),

    #[error("{op}: dimension mismatch ({left} vs {right}); expected two single-qubit operators")]
    DimensionMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("matrix is not Hermitian (max |M - M†| = {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("controlled-Z slot {0} out of range; expected 1..=3")]
    SlotOutOfRange(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("measurement branches are degenerate: total probability {0:e}")]
    DegenerateMeasurement(f64),

    #[error("branch probabilities sum to {0}, expected 1")]
    BranchNormalization(f64),

    #[error("tomography data incomplete: {0}")]
    MissingSettings(String),

    #[error("fit is unidentifiable: {0}")]
    Unidentifiable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
