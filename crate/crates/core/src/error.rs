//! Error type shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Errors reported by the numerical pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("QR eigensolver failed to converge after {iterations} iterations")]
    EigNonConvergence { iterations: usize },

    #[error("eigenvalue {value} is repeated (relative gap {gap:.3e}); simple spectrum required")]
    RepeatedEigenvalue { value: Complex64, gap: f64 },

    #[error("eigenpair {index} is defective: |<w, v>| = {overlap:.3e}")]
    DefectiveEigenpair { index: usize, overlap: f64 },

    #[error("drift matrix is not stable: eigenvalue {value} has non-negative real part")]
    UnstableDrift { value: Complex64 },

    #[error("matrix is not positive semi-definite: min eigenvalue {min_eig:.3e}")]
    NotPositiveSemiDefinite { min_eig: f64 },

    #[error("filter fails basic conditions: {0}")]
    BasicConditions(String),

    #[error(
        "evaluation point z = {z} outside domain: Re(mu + z) = {margin:.3e} <= 0 for mu = {mu}"
    )]
    SpectralDomain {
        z: Complex64,
        mu: Complex64,
        margin: f64,
    },

    #[error(
        "internal consistency check failed: {context} (residual {residual:.3e}, tol {tol:.3e})"
    )]
    ConsistencyFailure {
        context: String,
        residual: f64,
        tol: f64,
    },

    #[error("dominant eigenvalue {value} coincides with another branch; solvability condition inapplicable")]
    DegenerateDominantBranch { value: Complex64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("no sign change of Re lambda over bracket [{lo}, {hi}]: f(lo) = {f_lo:.3e}, f(hi) = {f_hi:.3e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
