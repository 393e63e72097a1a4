//! The colored-noise filter `(H, B, a)`: validation of the basic
//! conditions, eigenstructure, and stationary covariance.
//!
//! The scalar noise fed to the forced system is `f(t) = <a, s(t)>` where
//! `ds = H s dt + xi dt` and `<xi(t+tau) xi^T(t)> = B delta(tau)`.

use crate::numerics::{self, eig_dense_real, lyapunov_solve, CMatrix, CVector, RMatrix, RVector};
use crate::{Error, Result};
use num_complex::Complex64;

/// Relative gap below which two filter eigenvalues count as repeated.
pub const SIMPLE_EIG_REL_GAP: f64 = 1e-8;

/// Relative singular-value threshold for the controllability rank test.
pub const CONTROLLABILITY_TOL: f64 = 1e-10;

/// The triple `(H, B, a)` defining an n-dimensional filter.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    h: RMatrix,
    b: RMatrix,
    a: RVector,
}

impl FilterSpec {
    /// Build a filter spec, checking shapes and finiteness only. Whether
    /// the matrices satisfy the basic conditions is a separate, total
    /// check: [`validate_basic_conditions`].
    pub fn new(h: RMatrix, b: RMatrix, a: RVector) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::NotSquare {
                rows: h.nrows(),
                cols: h.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "filter dimension must be >= 1".into(),
            ));
        }
        if b.nrows() != n || b.ncols() != n || a.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "filter: H is {n}x{n}, B is {}x{}, a has length {}",
                    b.nrows(),
                    b.ncols(),
                    a.len()
                ),
            });
        }
        if h.iter()
            .chain(b.iter())
            .chain(a.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Ok(Self { h, b, a })
    }

    /// The two-dimensional family `H = [[-mu1, 0], [beta, -mu2]]`,
    /// `B = diag(1, 0)`, `a = (a1, a2)`.
    pub fn filter2(mu1: f64, mu2: f64, beta: f64, a1: f64, a2: f64) -> Result<Self> {
        Self::new(
            RMatrix::from_row_slice(2, 2, &[-mu1, 0.0, beta, -mu2]),
            RMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            RVector::from_vec(vec![a1, a2]),
        )
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &RMatrix {
        &self.h
    }

    pub fn b(&self) -> &RMatrix {
        &self.b
    }

    pub fn a(&self) -> &RVector {
        &self.a
    }

    /// Same filter with the readout vector replaced.
    pub fn with_readout(&self, a: RVector) -> Result<Self> {
        Self::new(self.h.clone(), self.b.clone(), a)
    }
}

/// One clause of the basic-conditions check.
#[derive(Debug, Clone)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail per clause plus diagnostics. Validation is total: bad inputs
/// produce a failing report, never a panic.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub clauses: Vec<Clause>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Clause> {
        self.clauses.iter().find(|c| !c.passed)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.clauses {
            writeln!(
                f,
                "[{}] {}: {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Check the basic conditions: (i) B symmetric positive semi-definite,
/// (ii) H has simple, stable eigenvalues, (iii) (H, B) controllable.
pub fn validate_basic_conditions(spec: &FilterSpec) -> ValidationReport {
    let mut clauses = Vec::with_capacity(3);
    let n = spec.dim();

    // (i) B symmetric PSD
    let b = &spec.b;
    let b_scale = b.norm().max(1e-300);
    let asym = (b - b.transpose()).norm();
    let symmetric = asym <= 1e-12 * b_scale;
    let min_eig = if symmetric {
        let sym = 0.5 * (b + b.transpose());
        nalgebra::SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::NAN
    };
    let psd = symmetric && min_eig >= -1e-12 * b_scale;
    clauses.push(Clause {
        name: "B symmetric PSD",
        passed: psd,
        detail: if !symmetric {
            format!("asymmetry |B - B^T| = {asym:.3e}")
        } else {
            format!("min eigenvalue {min_eig:.3e}")
        },
    });

    // (ii) H simple stable eigenvalues
    let clause_ii = match eig_dense_real(&spec.h) {
        Ok(eig) => {
            let max_re = eig
                .values
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
            let stable = max_re < 0.0;
            let gap = eig.min_relative_gap();
            let simple = gap >= SIMPLE_EIG_REL_GAP;
            Clause {
                name: "H simple stable eigenvalues",
                passed: stable && simple,
                detail: format!("max Re = {max_re:.3e}, min relative gap = {gap:.3e}"),
            }
        }
        Err(e) => Clause {
            name: "H simple stable eigenvalues",
            passed: false,
            detail: format!("eigensolve failed: {e}"),
        },
    };
    clauses.push(clause_ii);

    // (iii) rank [B, HB, ..., H^{n-1} B] = n via singular values
    let mut ctrl = RMatrix::zeros(n, n * n);
    let mut hk_b = b.clone();
    for k in 0..n {
        ctrl.view_mut((0, k * n), (n, n)).copy_from(&hk_b);
        hk_b = &spec.h * hk_b;
    }
    let svals = ctrl.svd(false, false).singular_values;
    let sigma_max = svals.iter().cloned().fold(0.0f64, f64::max);
    let rank = svals
        .iter()
        .filter(|&&s| s > CONTROLLABILITY_TOL * sigma_max.max(1e-300))
        .count();
    clauses.push(Clause {
        name: "(H, B) controllable",
        passed: sigma_max > 0.0 && rank == n,
        detail: format!(
            "rank {rank} of {n}, singular values {:?}",
            svals.iter().map(|s| format!("{s:.3e}")).collect::<Vec<_>>()
        ),
    });

    ValidationReport { clauses }
}

/// Eigenstructure of the filter drift: `H u_k = -mu_k u_k` with
/// `Re mu_k > 0`, adjoints `H^T v_k = -conj(mu_k) v_k` normalized so that
/// `<v_k, u_j> = delta_kj`.
#[derive(Debug, Clone)]
pub struct FilterModes {
    /// Decay rates, sorted by ascending real part; all have `Re > 0`.
    pub mu: Vec<Complex64>,
    /// Right eigenvectors of H as columns, unit 2-norm.
    pub u: CMatrix,
    /// Adjoint eigenvectors as columns, `<v_k, u_j> = delta_kj`.
    pub v: CMatrix,
    /// `conj_pair[k] = Some(j)` when `mu_j = conj(mu_k)` with `Im mu_k != 0`.
    pub conj_pair: Vec<Option<usize>>,
}

impl FilterModes {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn u_col(&self, k: usize) -> CVector {
        self.u.column(k).into_owned()
    }

    pub fn v_col(&self, k: usize) -> CVector {
        self.v.column(k).into_owned()
    }
}

/// Compute the filter eigenstructure. Fails on repeated or unstable
/// eigenvalues (basic condition (ii)).
pub fn filter_modes(spec: &FilterSpec) -> Result<FilterModes> {
    let n = spec.dim();
    let eig = eig_dense_real(&spec.h)?;
    eig.require_simple(SIMPLE_EIG_REL_GAP)?;
    eig.require_nondefective()?;
    if let Some(bad) = eig.values.iter().find(|z| z.re >= 0.0) {
        return Err(Error::UnstableDrift { value: *bad });
    }

    // mu_k = -eigenvalue, sorted by (Re asc, Im asc) for determinism
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (-eig.values[i], -eig.values[j]);
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });

    let mut mu: Vec<Complex64> = order.iter().map(|&i| -eig.values[i]).collect();
    let mut u = CMatrix::zeros(n, n);
    let mut v = CMatrix::zeros(n, n);
    for (col, &pos) in order.iter().enumerate() {
        u.set_column(col, &phase_fix(&eig.right.column(pos).into_owned()));
    }

    // enforce exact conjugate symmetry between paired modes
    let mut conj_pair: Vec<Option<usize>> = vec![None; n];
    let scale = mu.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    for k in 0..n {
        if mu[k].im.abs() <= 1e-14 * scale {
            mu[k].im = 0.0;
            continue;
        }
        if conj_pair[k].is_some() {
            continue;
        }
        let partner = (0..n)
            .filter(|&j| j != k && conj_pair[j].is_none())
            .min_by(|&a, &b| {
                let da = (mu[a] - mu[k].conj()).norm();
                let db = (mu[b] - mu[k].conj()).norm();
                da.partial_cmp(&db).unwrap()
            });
        match partner {
            Some(j) if (mu[j] - mu[k].conj()).norm() <= 1e-8 * scale => {
                conj_pair[k] = Some(j);
                conj_pair[j] = Some(k);
                mu[j] = mu[k].conj();
                let uc = u.column(k).map(|z| z.conj());
                u.set_column(j, &uc);
            }
            _ => {
                return Err(Error::ConsistencyFailure {
                    context: format!("complex eigenvalue {} has no conjugate partner", mu[k]),
                    residual: f64::NAN,
                    tol: 1e-8,
                })
            }
        }
    }

    // adjoints: rows of U^{-1} give <v_k, u_j> = delta_kj directly
    let u_inv = u
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::ConsistencyFailure {
            context: "filter eigenvector matrix singular".into(),
            residual: f64::INFINITY,
            tol: 0.0,
        })?;
    for k in 0..n {
        // v_k = (row k of U^{-1})^* so that v_k^* u_j = delta_kj
        let row = u_inv.row(k);
        let col = CVector::from_fn(n, |i, _| row[i].conj());
        v.set_column(k, &col);
    }

    let modes = FilterModes {
        mu,
        u,
        v,
        conj_pair,
    };
    verify_modes(spec, &modes)?;
    Ok(modes)
}

fn phase_fix(x: &CVector) -> CVector {
    let mut idx = 0;
    let mut best = 0.0;
    for (i, z) in x.iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            idx = i;
        }
    }
    if best == 0.0 {
        return x.clone();
    }
    let phase = x[idx] / x[idx].norm();
    x / phase
}

fn verify_modes(spec: &FilterSpec, modes: &FilterModes) -> Result<()> {
    let n = spec.dim();
    let h = numerics::to_complex(&spec.h);
    let h_scale = spec.h.norm().max(1e-300);
    for k in 0..n {
        let u = modes.u_col(k);
        let res = (&h * &u + &u * modes.mu[k]).norm();
        if res > 1e-10 * h_scale {
            return Err(Error::ConsistencyFailure {
                context: format!("filter mode {k} eigen-residual"),
                residual: res,
                tol: 1e-10 * h_scale,
            });
        }
        for j in 0..n {
            let d = modes.v.column(k).dotc(&modes.u.column(j));
            let expect = if j == k { 1.0 } else { 0.0 };
            if (d - Complex64::new(expect, 0.0)).norm() > 1e-10 {
                return Err(Error::ConsistencyFailure {
                    context: format!("filter modes bi-orthonormality ({k},{j})"),
                    residual: (d - Complex64::new(expect, 0.0)).norm(),
                    tol: 1e-10,
                });
            }
        }
    }
    Ok(())
}

/// Stationary second moments of `s`: the covariance solves
/// `H X + X H^T = -B`; its inverse is the precision matrix appearing in
/// the Gaussian stationary density `exp(-<s, precision s>/2)`.
#[derive(Debug, Clone)]
pub struct StationaryCovariance {
    /// Covariance of the stationary state.
    pub covariance: RMatrix,
    /// Inverse covariance.
    pub precision: RMatrix,
}

/// Compute the stationary covariance along two independent routes — the
/// Lyapunov solve and the eigenvector construction `P Q^{-1}` — and
/// require them to agree to 1e-8 relative.
pub fn stationary_covariance(spec: &FilterSpec) -> Result<StationaryCovariance> {
    let report = validate_basic_conditions(spec);
    if let Some(fail) = report.first_failure() {
        return Err(Error::BasicConditions(format!(
            "{}: {}",
            fail.name, fail.detail
        )));
    }
    let modes = filter_modes(spec)?;
    let via_lyapunov = lyapunov_solve(&spec.h, &spec.b)?;
    let via_ladder = covariance_from_modes(spec, &modes)?;

    let scale = via_lyapunov.norm().max(1e-300);
    let diff = (&via_lyapunov - &via_ladder).norm();
    if diff > 1e-8 * scale {
        return Err(Error::ConsistencyFailure {
            context: "stationary covariance: Lyapunov vs ladder P Q^{-1}".into(),
            residual: diff / scale,
            tol: 1e-8,
        });
    }

    let sym = nalgebra::SymmetricEigen::new(via_lyapunov.clone());
    let min_eig = sym
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(Error::BasicConditions(format!(
            "stationary covariance not positive definite (min eigenvalue {min_eig:.3e}); \
             (H, B) is likely not controllable"
        )));
    }
    let precision = via_lyapunov
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::ConsistencyFailure {
            context: "covariance inversion".into(),
            residual: f64::INFINITY,
            tol: 0.0,
        })?;
    Ok(StationaryCovariance {
        covariance: via_lyapunov,
        precision: 0.5 * (&precision + precision.transpose()),
    })
}

/// The ladder route: columns `p_k = -(H - mu_k I)^{-1} B conj(v_k)` and
/// `q_k = conj(v_k)` assemble into `P Q^{-1}`, which equals the
/// stationary covariance.
pub fn covariance_from_modes(spec: &FilterSpec, modes: &FilterModes) -> Result<RMatrix> {
    let n = spec.dim();
    let h = numerics::to_complex(&spec.h);
    let b = numerics::to_complex(&spec.b);
    let mut p = CMatrix::zeros(n, n);
    let mut q = CMatrix::zeros(n, n);
    for k in 0..n {
        let v_bar = modes.v.column(k).map(|z| z.conj());
        let rhs = &b * &v_bar;
        let shifted = &h - CMatrix::identity(n, n) * modes.mu[k];
        let sol = shifted.lu().solve(&rhs).ok_or(Error::ConsistencyFailure {
            context: format!("resolvent solve at mu_{k}"),
            residual: f64::INFINITY,
            tol: 0.0,
        })?;
        p.set_column(k, &(-sol));
        q.set_column(k, &v_bar);
    }
    let q_inv = q.lu().try_inverse().ok_or(Error::ConsistencyFailure {
        context: "ladder Q matrix singular".into(),
        residual: f64::INFINITY,
        tol: 0.0,
    })?;
    let sigma_inv = p * q_inv;
    let imag = sigma_inv.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
    let scale = numerics::max_abs(&sigma_inv).max(1e-300);
    if imag > 1e-9 * scale {
        return Err(Error::ConsistencyFailure {
            context: "P Q^{-1} has a non-real part".into(),
            residual: imag / scale,
            tol: 1e-9,
        });
    }
    let re = RMatrix::from_fn(n, n, |i, j| sigma_inv[(i, j)].re);
    Ok(0.5 * (&re + re.transpose()))
}
