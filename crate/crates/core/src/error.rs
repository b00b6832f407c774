use thiserror::Error;

/// Failures raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |M - M^dagger| = {max_asymmetry:e}")]
    NonHermitian { max_asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("weak-value pole: |<psi2|psi1>| = {overlap:e} is below the pole tolerance")]
    Pole { overlap: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid does not resolve {what}: {detail}")]
    Unresolved { what: &'static str, detail: String },

    #[error("profile truncated by the grid: {mass:e} of the probability mass lies outside")]
    Truncation { mass: f64 },

    #[error("post-selection probability {p12:e} is too small to condition on")]
    VanishingPostSelection { p12: f64 },

    #[error("every orbit sample lies on a pole of the weak value")]
    OrthogonalOrbit,

    #[error("posterior is not unimodal inside [{lo}, {hi}]: {modes} local maxima")]
    Multimodal { lo: f64, hi: f64, modes: usize },

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("conjugate point: boundary problem is focusing ({detail})")]
    Focusing { detail: String },

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
