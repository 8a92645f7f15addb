use thiserror::Error;

/// Errors raised by the measurement toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("trace is {trace}, expected 1")]
    TraceNotUnit { trace: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("expectation value has imaginary residue {residue:.3e}")]
    ImaginaryResidue { residue: f64 },

    #[error("invalid subsystem selection: {0}")]
    InvalidSubsystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense path refused: N = {n} exceeds the limit {max}")]
    DenseGuard { n: usize, max: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("constraint targets are infeasible: {0}")]
    Infeasible(String),

    #[error("constraint observables are linearly dependent (Gram eigenvalue {min_eigenvalue:.3e})")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("outcome {index} has zero probability, branch state undefined")]
    UndefinedBranch { index: usize },

    #[error("pointer window leakage {leakage:.3e} between outcomes {i} and {j}")]
    WindowLeakage { i: usize, j: usize, leakage: f64 },

    #[error("subensemble state does not factorize (trace distance {distance:.3e})")]
    FactorizationMismatch { distance: f64 },

    #[error("invalid pointer model: {0}")]
    InvalidPointer(String),

    #[error("sequence does not converge: {0}")]
    NonConvergentSequence(String),

    #[error("LP and CHSH inequality checks disagree: {0}")]
    FineMismatch(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

impl Error {
    /// True for errors raised by size guards on dense computations.
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::DenseGuard { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
