//! Moment stability of linear ODE systems parametrically forced by colored
//! noise from an n-dimensional Ornstein-Uhlenbeck filter.
//!
//! The colored noise is the scalar readout `f(t) = <a, s(t)>` of the filter
//!
//! ```text
//!     ds = H s dt + xi(t) dt,      <xi(t+tau) xi^T(t)> = B delta(tau),
//! ```
//!
//! driving the linear system `dx/dt = (A0 + eps f(t) A1) x`. Whether the
//! p-th moments of `x` stay bounded is decided by the sign of the dominant
//! eigenvalue of the marginal-moment generator. This crate computes that
//! eigenvalue three independent ways and cross-checks them:
//!
//! - [`perturbation`]: the small-`eps` expansion `lambda(eps) = lambda0 +
//!   eps^2 lambda2 + O(eps^4)`, with `lambda2` evaluated through the ladder
//!   coefficients, through the extended power spectral density, and (for
//!   second moments) through an eigenvector tensor contraction of `A0`/`A1`.
//! - [`truncation`]: a non-perturbative Hermite x moment Galerkin truncation
//!   for two-dimensional filters, valid at any `eps`.
//! - [`montecarlo`]: ensemble Euler-Maruyama simulation of the coupled SDE.
//!
//! Supporting modules: [`numerics`] (dense complex eigensolver, Lyapunov
//! solve, matrix exponential), [`filter`] (validation, eigenstructure,
//! stationary covariance), [`ladder`] (raising/lowering operator system of
//! the Fokker-Planck generator), [`spectral`] (autocorrelation and spectral
//! densities), [`moments`] (moment generator matrices).

pub mod error;
pub mod filter;
pub mod ladder;
pub mod moments;
pub mod montecarlo;
pub mod numerics;
pub mod perturbation;
pub mod spectral;
pub mod truncation;

pub use error::{Error, Result};
pub use filter::{FilterModes, FilterSpec, StationaryCovariance, ValidationReport};
pub use ladder::LadderSystem;
pub use moments::{MomentBasis, MomentEigen, MomentOperator, SystemSpec};
pub use montecarlo::{GrowthRate, MomentSeries, SimConfig};
pub use numerics::{CMatrix, CVector, EigenDecomposition, RMatrix, RVector};
pub use perturbation::{Perturbation, PerturbationResult, Prediction};
pub use spectral::Spectrum;
pub use truncation::{Filter2Spec, TruncationConfig, TruncationResult};
