//! Asymptotic autocorrelation and spectral densities of the filter output.
//!
//! For large times the filter state becomes stationary with autocorrelation
//! `R(tau) = Cov e^{H^T tau}` (`tau >= 0`). Its one-sided Laplace transform
//! `G(z) = int_0^inf R(tau) e^{-z tau} dtau` extends the power spectral
//! density off the imaginary axis; the scalar readout has
//! `G(z) = <a, G(z) a>` and `S(omega) = 2 Re G(i omega)`.

use crate::filter::{self, FilterModes, FilterSpec};
use crate::ladder;
use crate::numerics::{self, expm, to_complex, CMatrix, RMatrix};
use crate::{Error, Result};
use num_complex::Complex64;

/// Cached spectral data for one filter: modes, stationary covariance and
/// the ladder coefficients of the readout.
#[derive(Debug, Clone)]
pub struct Spectrum {
    spec: FilterSpec,
    modes: FilterModes,
    covariance: RMatrix,
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(spec: &FilterSpec) -> Result<Self> {
        let report = filter::validate_basic_conditions(spec);
        if let Some(fail) = report.first_failure() {
            return Err(Error::BasicConditions(format!(
                "{}: {}",
                fail.name, fail.detail
            )));
        }
        let modes = filter::filter_modes(spec)?;
        let covariance = filter::stationary_covariance(spec)?.covariance;
        let (alpha, beta) = ladder::alpha_beta(spec, &modes)?;
        Ok(Self {
            spec: spec.clone(),
            modes,
            covariance,
            alpha,
            beta,
        })
    }

    pub fn filter_spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn modes(&self) -> &FilterModes {
        &self.modes
    }

    /// Stationary covariance of the filter state; equals `R(0)`.
    pub fn covariance(&self) -> &RMatrix {
        &self.covariance
    }

    /// Matrix autocorrelation `R(tau)`; negative lags via `R(-tau)^T`.
    pub fn autocorrelation(&self, tau: f64) -> RMatrix {
        if tau >= 0.0 {
            &self.covariance * expm(&self.spec.h().transpose(), tau)
        } else {
            self.autocorrelation(-tau).transpose()
        }
    }

    /// Scalar autocorrelation of the readout, `<a, R(tau) a>`.
    pub fn autocorrelation_scalar(&self, tau: f64) -> f64 {
        (self.spec.a().transpose() * self.autocorrelation(tau) * self.spec.a())[(0, 0)]
    }

    /// Reject points with `Re(mu_l + z) <= 0`, where the Laplace transform
    /// diverges.
    pub fn check_domain(&self, z: Complex64) -> Result<()> {
        for &mu in &self.modes.mu {
            let margin = (mu + z).re;
            if margin <= 0.0 {
                return Err(Error::SpectralDomain { z, mu, margin });
            }
        }
        Ok(())
    }

    /// Extended power spectral density of the readout,
    /// `G(z) = -sum_l alpha_l beta_l / (mu_l + z)`.
    ///
    /// Cross-checked on every call against the independent resolvent form
    /// `-<a, Cov (H^T - z I)^{-1} a>`; disagreement beyond 1e-10 is an error.
    pub fn extended_psd(&self, z: Complex64) -> Result<Complex64> {
        self.check_domain(z)?;
        let g = self.extended_psd_unchecked(z);
        let g_mat = self.extended_psd_resolvent(z)?;
        let scale = g.norm().max(1.0);
        if (g - g_mat).norm() > 1e-10 * scale {
            return Err(Error::ConsistencyFailure {
                context: format!("extended PSD at z = {z}: ladder vs resolvent"),
                residual: (g - g_mat).norm(),
                tol: 1e-10 * scale,
            });
        }
        Ok(g)
    }

    /// The rational ladder-coefficient expression for `G`, evaluated
    /// without the domain check. Outside the Laplace domain this is the
    /// meromorphic continuation, not a convergent integral; callers must
    /// flag such use as advisory.
    pub fn extended_psd_unchecked(&self, z: Complex64) -> Complex64 {
        let mut g = Complex64::new(0.0, 0.0);
        for l in 0..self.modes.dim() {
            g -= self.alpha[l] * self.beta[l] / (self.modes.mu[l] + z);
        }
        g
    }

    /// Independent route: `G(z) = -<a, Cov (H^T - z I)^{-1} a>`.
    pub fn extended_psd_resolvent(&self, z: Complex64) -> Result<Complex64> {
        let n = self.spec.dim();
        let ht = to_complex(&self.spec.h().transpose());
        let shifted = ht - CMatrix::identity(n, n) * z;
        let a = numerics::to_complex_vec(self.spec.a());
        let sol = shifted.lu().solve(&a).ok_or(Error::ConsistencyFailure {
            context: format!("resolvent solve at z = {z}"),
            residual: f64::INFINITY,
            tol: 0.0,
        })?;
        let g_a = -(to_complex(&self.covariance) * sol);
        Ok(a.dotc(&g_a))
    }

    /// Power spectral density of the readout at angular frequency `omega`:
    /// `S(omega) = <a, (H + i omega)^{-1} B (H^T - i omega)^{-1} a>`,
    /// a Hermitian form, hence real and non-negative. Cross-checked
    /// against `2 Re G(i omega)`.
    pub fn psd(&self, omega: f64) -> Result<f64> {
        let n = self.spec.dim();
        let i_omega = Complex64::new(0.0, omega);
        let a = numerics::to_complex_vec(self.spec.a());
        // y = (H^T - i omega)^{-1} a, so S = <y, B y> = y* B y
        let shifted = to_complex(&self.spec.h().transpose()) - CMatrix::identity(n, n) * i_omega;
        let y = shifted.lu().solve(&a).ok_or(Error::ConsistencyFailure {
            context: format!("PSD resolvent solve at omega = {omega}"),
            residual: f64::INFINITY,
            tol: 0.0,
        })?;
        let quad = y.dotc(&(to_complex(self.spec.b()) * &y));
        let s = quad.re;
        if quad.im.abs() > 1e-12 * s.abs().max(1.0) {
            return Err(Error::ConsistencyFailure {
                context: format!("PSD Hermitian form at omega = {omega} not real"),
                residual: quad.im.abs(),
                tol: 1e-12 * s.abs().max(1.0),
            });
        }
        let via_g = 2.0 * self.extended_psd(i_omega)?.re;
        if (s - via_g).abs() > 1e-10 * s.abs().max(1.0) {
            return Err(Error::ConsistencyFailure {
                context: format!("PSD vs 2 Re G(i omega) at omega = {omega}"),
                residual: (s - via_g).abs(),
                tol: 1e-10 * s.abs().max(1.0),
            });
        }
        Ok(s)
    }

    /// Uniform grid of `(omega, S(omega))` rows.
    pub fn psd_grid(
        &self,
        omega_min: f64,
        omega_max: f64,
        count: usize,
    ) -> Result<Vec<(f64, f64)>> {
        if count < 2 {
            return Err(Error::InvalidArgument("psd grid needs count >= 2".into()));
        }
        if !(omega_min.is_finite() && omega_max.is_finite()) || omega_max <= omega_min {
            return Err(Error::InvalidArgument(format!(
                "bad omega range [{omega_min}, {omega_max}]"
            )));
        }
        let step = (omega_max - omega_min) / (count - 1) as f64;
        let mut rows = Vec::with_capacity(count);
        for k in 0..count {
            let omega = omega_min + step * k as f64;
            rows.push((omega, self.psd(omega)?));
        }
        Ok(rows)
    }
}
