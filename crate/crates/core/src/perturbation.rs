//! Small-amplitude expansion of the dominant moment eigenvalue:
//! `lambda(eps) = lambda0 + eps^2 lambda2 + O(eps^4)`.
//!
//! `lambda0` is a dominant eigenvalue `nu_1` of `Gamma0` (the first-order
//! term vanishes) and `lambda2` is computed along three independent
//! routes, kept deliberately separate so they can certify one another:
//!
//! - `lambda2_spectral`: weighted sum of extended-PSD values,
//!   `sum_j <psi_1, Gamma1 phi_j> <psi_j, Gamma1 phi_1> G(nu_1 - nu_j)`.
//! - `lambda2_direct`: the solvability condition evaluated through the
//!   ladder coefficients, `-sum_k <psi_1, alpha_k Gamma1 c_k>`.
//! - `lambda2_tensor` (second moments only): an eigenvector contraction
//!   of `A0`/`A1` that never forms the moment generators.

use crate::filter::FilterSpec;
use crate::ladder::{self, LadderSystem};
use crate::moments::{self, MomentEigen, MomentOperator, SystemSpec};
use crate::numerics::{eig_dense_real, CVector};
use crate::spectral::Spectrum;
use crate::{Error, Result};
use num_complex::Complex64;

/// One `j`-term of the spectral-route sum.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub nu_j: Complex64,
    /// `<psi_1, Gamma1 phi_j> <psi_j, Gamma1 phi_1>`
    pub coupling: Complex64,
    /// `G(nu_1 - nu_j)`
    pub g: Complex64,
    pub term: Complex64,
}

/// Expansion data for one dominant branch.
#[derive(Debug, Clone)]
pub struct PerturbationResult {
    pub branch_index: usize,
    /// `lambda0 = nu_1` for this branch.
    pub nu1: Complex64,
    /// The first-order coefficient, identically zero.
    pub lambda1: Complex64,
    pub lambda2: Complex64,
    pub contributions: Vec<Contribution>,
    /// False when some `Re(nu_1 - nu_j + mu_k) <= 0`, in which case the
    /// PSD sum used the meromorphic continuation and the result is
    /// advisory only.
    pub valid: bool,
    pub epsilon: f64,
    /// `lambda0 + eps^2 lambda2` at the configured amplitude.
    pub predicted: Complex64,
}

/// Results for every dominant branch plus the index of the branch with
/// the largest predicted growth rate.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub branches: Vec<PerturbationResult>,
    pub selected: usize,
}

impl Prediction {
    pub fn selected_branch(&self) -> &PerturbationResult {
        &self.branches[self.selected]
    }
}

/// Shared context: moment generators and their eigen-data, the ladder
/// system, and the spectral cache for one (system, filter) pair.
#[derive(Debug, Clone)]
pub struct Perturbation {
    sys: SystemSpec,
    op: MomentOperator,
    eig: MomentEigen,
    ladder: LadderSystem,
    spectrum: Spectrum,
}

impl Perturbation {
    pub fn new(sys: &SystemSpec, filter: &FilterSpec) -> Result<Self> {
        let op = moments::build_gamma(sys);
        let eig = moments::eig_gamma(&op)?;
        let spectrum = Spectrum::new(filter)?;
        let ladder = ladder::ladder_eigensystem(filter, spectrum.modes())?;
        Ok(Self {
            sys: sys.clone(),
            op,
            eig,
            ladder,
            spectrum,
        })
    }

    pub fn moment_operator(&self) -> &MomentOperator {
        &self.op
    }

    pub fn moment_eigen(&self) -> &MomentEigen {
        &self.eig
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn ladder(&self) -> &LadderSystem {
        &self.ladder
    }

    /// Index of the dominant branch closest to `nu`.
    pub fn branch_near(&self, nu: Complex64) -> Option<usize> {
        (0..self.eig.values.len()).min_by(|&i, &j| {
            let di = (self.eig.values[i] - nu).norm();
            let dj = (self.eig.values[j] - nu).norm();
            di.partial_cmp(&dj).unwrap()
        })
    }

    fn check_branch(&self, branch: usize) -> Result<()> {
        let nu1 = self.eig.values[branch];
        let scale = nu1.norm().max(1.0);
        for (j, &nu_j) in self.eig.values.iter().enumerate() {
            if j != branch && (nu_j - nu1).norm() < 1e-12 * scale {
                return Err(Error::DegenerateDominantBranch { value: nu1 });
            }
        }
        Ok(())
    }

    /// True when `Re(nu_1 - nu_j + mu_k) > 0` for every `(j, k)`.
    pub fn branch_valid(&self, branch: usize) -> bool {
        let nu1 = self.eig.values[branch];
        self.eig.values.iter().all(|nu_j| {
            self.ladder
                .mu
                .iter()
                .all(|mu_k| (nu1 - nu_j + mu_k).re > 0.0)
        })
    }

    /// `G(z)` through the checked route when the branch is valid, through
    /// the meromorphic continuation otherwise.
    fn g_for(&self, z: Complex64, valid: bool) -> Result<Complex64> {
        if valid {
            self.spectrum.extended_psd(z)
        } else {
            Ok(self.spectrum.extended_psd_unchecked(z))
        }
    }

    /// Spectral route with the per-branch contribution table.
    pub fn lambda2_spectral_detailed(
        &self,
        branch: usize,
    ) -> Result<(Complex64, Vec<Contribution>, bool)> {
        self.check_branch(branch)?;
        let valid = self.branch_valid(branch);
        let nu1 = self.eig.values[branch];
        let psi1 = self.eig.psi.column(branch);
        let phi1 = self.eig.phi.column(branch);
        let gamma1 = crate::numerics::to_complex(&self.op.gamma1);
        let g1_phi1 = &gamma1 * phi1;

        let mut total = Complex64::new(0.0, 0.0);
        let mut contributions = Vec::with_capacity(self.eig.values.len());
        for (j, &nu_j) in self.eig.values.iter().enumerate() {
            let phi_j = self.eig.phi.column(j);
            let psi_j = self.eig.psi.column(j);
            let coupling = psi1.dotc(&(&gamma1 * phi_j)) * psi_j.dotc(&g1_phi1);
            let g = self.g_for(nu1 - nu_j, valid)?;
            let term = coupling * g;
            total += term;
            contributions.push(Contribution {
                nu_j,
                coupling,
                g,
                term,
            });
        }
        Ok((total, contributions, valid))
    }

    /// `lambda2` as a weighted sum of extended-PSD values.
    pub fn lambda2_spectral(&self, branch: usize) -> Result<Complex64> {
        self.lambda2_spectral_detailed(branch).map(|(l2, _, _)| l2)
    }

    /// The solvability-condition route: build
    /// `c_k = sum_j beta_k <psi_j, Gamma1 phi_1> phi_j / (nu_1 - nu_j + mu_k)`
    /// and return `-sum_k <psi_1, alpha_k Gamma1 c_k>`.
    pub fn lambda2_direct(&self, branch: usize) -> Result<Complex64> {
        self.check_branch(branch)?;
        let nu1 = self.eig.values[branch];
        let psi1 = self.eig.psi.column(branch);
        let phi1 = self.eig.phi.column(branch);
        let gamma1 = crate::numerics::to_complex(&self.op.gamma1);
        let g1_phi1 = &gamma1 * phi1;
        let j_dim = self.eig.values.len();

        let mut lambda2 = Complex64::new(0.0, 0.0);
        for k in 0..self.ladder.dim() {
            let mu_k = self.ladder.mu[k];
            let beta_k = self.ladder.beta[k];
            let alpha_k = self.ladder.alpha[k];
            let mut c_k = CVector::zeros(j_dim);
            for j in 0..j_dim {
                let psi_j = self.eig.psi.column(j);
                let weight = beta_k * psi_j.dotc(&g1_phi1) / (nu1 - self.eig.values[j] + mu_k);
                c_k += self.eig.phi.column(j) * weight;
            }
            lambda2 -= alpha_k * psi1.dotc(&(&gamma1 * c_k));
        }
        Ok(lambda2)
    }

    /// Second-moment route working directly on `A0`, `A1`: for the branch
    /// `lambda0 = sigma_q + sigma_r`,
    /// `lambda2 = 8 sum_{jk} C_jkqr C_qrjk G(sigma_q+sigma_r-sigma_j-sigma_k) / (1+delta_qr)`.
    ///
    /// Returns the pair `(lambda0, lambda2)`; `sigma` indices refer to the
    /// eigenvalues of `A0` sorted by descending real part.
    #[allow(clippy::needless_range_loop)]
    pub fn lambda2_tensor(&self, q: usize, r: usize) -> Result<(Complex64, Complex64)> {
        if self.sys.p() != 2 {
            return Err(Error::Unsupported(
                "tensor route applies to second moments (p = 2) only".into(),
            ));
        }
        let n = self.sys.dim();
        if q >= n || r >= n {
            return Err(Error::InvalidArgument(format!(
                "branch pair ({q}, {r}) out of range for N = {n}"
            )));
        }
        let eig = eig_dense_real(self.sys.a0())?;
        eig.require_nondefective()?;
        let sigma = &eig.values;
        let a1 = crate::numerics::to_complex(self.sys.a1());

        // W[j][l] = <g_j, A1 h_l>
        let mut w = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for j in 0..n {
            for l in 0..n {
                w[j][l] = eig.left.column(j).dotc(&(&a1 * eig.right.column(l)));
            }
        }
        let c = |j: usize, k: usize, l: usize, m: usize| -> Complex64 {
            let d = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
            (w[k][l] * d(j, m) + w[j][l] * d(k, m) + w[k][m] * d(j, l) + w[j][m] * d(k, l)) * 0.25
        };

        let lambda0 = sigma[q] + sigma[r];
        let valid = (0..n).all(|j| {
            (0..n).all(|k| {
                self.ladder
                    .mu
                    .iter()
                    .all(|mu_l| (lambda0 - sigma[j] - sigma[k] + mu_l).re > 0.0)
            })
        });
        let dqr = if q == r { 1.0 } else { 0.0 };
        let mut lambda2 = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                let weight = c(j, k, q, r) * c(q, r, j, k) / (1.0 + dqr);
                let g = self.g_for(lambda0 - sigma[j] - sigma[k], valid)?;
                lambda2 += weight * g;
            }
        }
        Ok((lambda0, lambda2 * 8.0))
    }

    /// Full expansion data for one branch (spectral route).
    pub fn branch_result(&self, branch: usize) -> Result<PerturbationResult> {
        let (lambda2, contributions, valid) = self.lambda2_spectral_detailed(branch)?;
        let nu1 = self.eig.values[branch];
        let eps = self.sys.epsilon();
        Ok(PerturbationResult {
            branch_index: branch,
            nu1,
            lambda1: Complex64::new(0.0, 0.0),
            lambda2,
            contributions,
            valid,
            epsilon: eps,
            predicted: nu1 + lambda2 * (eps * eps),
        })
    }

    /// Evaluate every dominant branch and select the one maximizing the
    /// predicted growth rate `Re(lambda0 + eps^2 lambda2)` at the
    /// configured amplitude. Ties keep the lowest branch index.
    pub fn predict(&self) -> Result<Prediction> {
        let mut branches = Vec::with_capacity(self.eig.dominant.len());
        for &b in &self.eig.dominant {
            branches.push(self.branch_result(b)?);
        }
        let selected = branches
            .iter()
            .enumerate()
            .max_by(|(i, x), (j, y)| {
                x.predicted
                    .re
                    .partial_cmp(&y.predicted.re)
                    .unwrap()
                    .then(j.cmp(i))
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Unsupported("no dominant branches".into()))?;
        Ok(Prediction { branches, selected })
    }
}

/// Closed forms for the Mathieu oscillator: the real parts
/// `(lambda0, lambda2)` of the dominant expansion for moments
/// `p in {1, 2, 3}`, in terms of the readout PSD at the free oscillation
/// frequency `Omega = sqrt(4 omega0^2 - gamma^2)`:
///
/// - p = 1: `(-gamma/2, [S(Omega) - S(0)] / (2 Omega^2))`
/// - p = 2: `(-gamma,   2 S(Omega) / Omega^2)`
/// - p = 3: `(-3 gamma/2, [7 S(Omega) - S(0)] / (2 Omega^2))`
pub fn mathieu_closed_form(
    gamma: f64,
    omega0: f64,
    spectrum: &Spectrum,
    p: usize,
) -> Result<(f64, f64)> {
    let disc = 4.0 * omega0 * omega0 - gamma * gamma;
    if disc <= 0.0 {
        return Err(Error::Unsupported(format!(
            "overdamped oscillator (4 omega0^2 = {:.3e} <= gamma^2 = {:.3e})",
            4.0 * omega0 * omega0,
            gamma * gamma
        )));
    }
    let omega = disc.sqrt();
    let s_osc = spectrum.psd(omega)?;
    let s_zero = spectrum.psd(0.0)?;
    match p {
        1 => Ok((-gamma / 2.0, (s_osc - s_zero) / (2.0 * disc))),
        2 => Ok((-gamma, 2.0 * s_osc / disc)),
        3 => Ok((-1.5 * gamma, (7.0 * s_osc - s_zero) / (2.0 * disc))),
        _ => Err(Error::Unsupported(format!(
            "closed forms cover p in {{1, 2, 3}}, got {p}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RVector;

    fn table1_filter() -> FilterSpec {
        FilterSpec::filter2(1.8, 0.9, 1.0, 1.0, 0.9).unwrap()
    }

    fn mathieu_table1(p: usize, eps: f64) -> Perturbation {
        let sys = SystemSpec::mathieu(0.5, 0.01, p, eps).unwrap();
        Perturbation::new(&sys, &table1_filter()).unwrap()
    }

    const OMEGA2: f64 = 0.9999; // 4 omega0^2 - gamma^2

    #[test]
    fn real_branch_lambda2_closed_form() {
        let pert = mathieu_table1(2, 0.05);
        let branch = pert.branch_near(Complex64::new(-0.01, 0.0)).unwrap();
        let l2 = pert.lambda2_spectral(branch).unwrap();
        let s = pert.spectrum().psd(OMEGA2.sqrt()).unwrap();
        let expect = 2.0 * s / OMEGA2;
        assert!((l2.re - expect).abs() < 1e-10 * expect);
        assert!(l2.im.abs() < 1e-12);
        assert!((l2.re - 1.105).abs() < 1e-3);
    }

    #[test]
    fn zero_readout_gives_zero_lambda2() {
        let sys = SystemSpec::mathieu(0.5, 0.01, 2, 0.05).unwrap();
        let filter = table1_filter().with_readout(RVector::zeros(2)).unwrap();
        let pert = Perturbation::new(&sys, &filter).unwrap();
        let branch = pert.branch_near(Complex64::new(-0.01, 0.0)).unwrap();
        assert_eq!(pert.lambda2_spectral(branch).unwrap().norm(), 0.0);
        assert_eq!(pert.lambda2_direct(branch).unwrap().norm(), 0.0);
    }

    #[test]
    fn complex_branch_lambda2_formula() {
        // for nu_1 = -gamma + i Omega: lambda2 = (2/Omega^2)(G(i Omega) - 2 G(0))
        let pert = mathieu_table1(2, 0.05);
        let omega = OMEGA2.sqrt();
        let branch = pert.branch_near(Complex64::new(-0.01, omega)).unwrap();
        let l2 = pert.lambda2_spectral(branch).unwrap();
        let g_osc = pert
            .spectrum()
            .extended_psd(Complex64::new(0.0, omega))
            .unwrap();
        let g_zero = pert
            .spectrum()
            .extended_psd(Complex64::new(0.0, 0.0))
            .unwrap();
        let expect = (g_osc - g_zero * 2.0) * (2.0 / OMEGA2);
        assert!((l2 - expect).norm() < 1e-10 * expect.norm().max(1.0));
    }

    #[test]
    fn direct_route_matches_spectral_route() {
        let pert = mathieu_table1(2, 0.05);
        for &branch in &pert.moment_eigen().dominant.clone() {
            let spectral = pert.lambda2_spectral(branch).unwrap();
            let direct = pert.lambda2_direct(branch).unwrap();
            assert!(
                (spectral - direct).norm() <= 1e-10 * (1.0 + spectral.norm()),
                "branch {branch}: {spectral} vs {direct}"
            );
        }
    }

    #[test]
    fn tensor_route_matches_gamma_route() {
        let pert = mathieu_table1(2, 0.05);
        // sigma sorted by descending Re; for the Mathieu pair the two
        // eigenvalues are conjugates, (0, 1) is the mixed branch -gamma
        let (lambda0, l2_tensor) = pert.lambda2_tensor(0, 1).unwrap();
        assert!((lambda0 - Complex64::new(-0.01, 0.0)).norm() < 1e-10);
        let branch = pert.branch_near(lambda0).unwrap();
        let l2_gamma = pert.lambda2_spectral(branch).unwrap();
        assert!(
            (l2_tensor - l2_gamma).norm() <= 1e-8 * (1.0 + l2_gamma.norm()),
            "{l2_tensor} vs {l2_gamma}"
        );
        assert!((l2_tensor.re - 1.105).abs() < 1e-3);
    }

    #[test]
    fn tensor_route_zero_for_zero_forcing_matrix() {
        let sys = SystemSpec::new(
            RMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.25, -0.01]),
            RMatrix::zeros(2, 2),
            2,
            0.1,
        )
        .unwrap();
        let pert = Perturbation::new(&sys, &table1_filter()).unwrap();
        let (_, l2) = pert.lambda2_tensor(0, 0).unwrap();
        assert_eq!(l2.norm(), 0.0);
    }

    use crate::numerics::RMatrix;

    #[test]
    fn tensor_route_requires_second_moments() {
        let pert = mathieu_table1(3, 0.05);
        assert!(matches!(
            pert.lambda2_tensor(0, 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn closed_forms_table1() {
        let spectrum = Spectrum::new(&table1_filter()).unwrap();
        let (l0, l2) = mathieu_closed_form(0.01, 0.5, &spectrum, 2).unwrap();
        assert!((l0 + 0.01).abs() < 1e-15);
        assert!((l2 - 1.105).abs() < 1e-3);

        // p = 1 wiring: lambda2 = (S(Omega) - S(0)) / (2 Omega^2)
        let (l0_1, l2_1) = mathieu_closed_form(0.01, 0.5, &spectrum, 1).unwrap();
        assert!((l0_1 + 0.005).abs() < 1e-15);
        let s_osc = spectrum.psd(OMEGA2.sqrt()).unwrap();
        let s_zero = spectrum.psd(0.0).unwrap();
        assert!((l2_1 - (s_osc - s_zero) / (2.0 * OMEGA2)).abs() < 1e-15);
        // Table-1 filter has S(0) > S(Omega): first moments are stabilized
        assert!(l2_1 < 0.0);

        let (l0_3, l2_3) = mathieu_closed_form(0.01, 0.5, &spectrum, 3).unwrap();
        assert!((l0_3 + 0.015).abs() < 1e-15);
        assert!((l2_3 - (7.0 * s_osc - s_zero) / (2.0 * OMEGA2)).abs() < 1e-15);

        assert!(mathieu_closed_form(2.0, 0.5, &spectrum, 2).is_err());
        assert!(mathieu_closed_form(0.01, 0.5, &spectrum, 4).is_err());
    }

    #[test]
    fn predict_selects_real_branch_for_second_moments() {
        let pert = mathieu_table1(2, 0.05);
        let prediction = pert.predict().unwrap();
        assert_eq!(prediction.branches.len(), 3);
        let chosen = prediction.selected_branch();
        assert!((chosen.nu1 - Complex64::new(-0.01, 0.0)).norm() < 1e-10);
        assert!(chosen.valid);
        assert!((chosen.predicted.re - (-7.237e-3)).abs() < 1e-6);
        assert_eq!(chosen.lambda1.norm(), 0.0);
    }

    #[test]
    fn zero_amplitude_prediction_is_lambda0() {
        let pert = mathieu_table1(2, 0.0);
        let prediction = pert.predict().unwrap();
        for b in &prediction.branches {
            assert_eq!(b.predicted, b.nu1);
        }
    }

    #[test]
    fn exactly_degenerate_branch_rejected() {
        let sys = SystemSpec::new(
            RMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            RMatrix::zeros(2, 2),
            1,
            0.0,
        )
        .unwrap();
        let pert = Perturbation::new(&sys, &table1_filter()).unwrap();
        assert!(matches!(
            pert.lambda2_spectral(0),
            Err(Error::DegenerateDominantBranch { .. })
        ));
    }

    #[test]
    fn conjugate_branches_give_conjugate_lambda2() {
        let pert = mathieu_table1(2, 0.05);
        let omega = OMEGA2.sqrt();
        let plus = pert.branch_near(Complex64::new(-0.01, omega)).unwrap();
        let minus = pert.branch_near(Complex64::new(-0.01, -omega)).unwrap();
        let l2p = pert.lambda2_spectral(plus).unwrap();
        let l2m = pert.lambda2_spectral(minus).unwrap();
        assert!((l2p - l2m.conj()).norm() < 1e-10 * (1.0 + l2p.norm()));
    }
}
