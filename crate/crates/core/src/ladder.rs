//! Ladder operators of the Fokker-Planck generator of the filter.
//!
//! The generator `Dcal phi = div(B grad phi)/2 - div(H s phi)` acts on
//! functions of the filter state. Operators of the form
//! `L = sum_j y_j L_j`, with `L_1..L_n` the partial derivatives,
//! `L_{n+1}..L_{2n}` multiplication by `s_j`, and `L_{2n+1}` the identity,
//! satisfy the commutator equation `[Dcal, L] = mu L` exactly when the
//! coefficient vector solves the matrix eigenvalue problem `T y = mu y`
//! with `T = D A`. Everything here is finite linear algebra on the
//! coefficient vectors; no differential operators are materialized.
//!
//! Raising operators (increment `+mu_k`, `Re mu_k > 0`) annihilate the
//! stationary density; lowering operators generate the rest of the
//! spectrum, which is the lattice `-sum_k n_k mu_k`.

use crate::filter::{FilterModes, FilterSpec};
use crate::numerics::{self, to_complex, CMatrix, CVector, RMatrix};
use crate::{Error, Result};
use num_complex::Complex64;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Coefficient-vector form of the ladder-operator system.
///
/// For `k = 1..n`: `y_raising[k-1]` is the eigenvector of `T = D A` with
/// eigenvalue `+mu_k`, `y_lowering[k-1]` the one with `-mu_k`;
/// `w_*` are the corresponding normalized adjoint eigenvectors. The
/// remaining eigenvector (eigenvalue 0) is the last coordinate vector.
#[derive(Debug, Clone)]
pub struct LadderSystem {
    /// Antisymmetric commutator matrix in the `L_j` basis.
    pub a_mat: RMatrix,
    /// Symmetric coefficient matrix of the generator in the `L_j` basis.
    pub d_mat: RMatrix,
    /// Increments `mu_k`, `Re mu_k > 0`, ordered as in [`FilterModes`].
    pub mu: Vec<Complex64>,
    /// Convention for the zero-increment slot in the decomposition
    /// identity: `mu_0 = -tr H`.
    pub mu0: f64,
    pub y_raising: Vec<CVector>,
    pub y_lowering: Vec<CVector>,
    pub w_raising: Vec<CVector>,
    pub w_lowering: Vec<CVector>,
    /// Raising coefficients of the readout: `<a, s> = sum_k alpha_k L_k + beta_k L_{-k}`.
    pub alpha: Vec<Complex64>,
    /// Lowering coefficients of the readout.
    pub beta: Vec<Complex64>,
}

impl LadderSystem {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `T = D A`, built from the stored blocks.
    pub fn t_mat(&self) -> RMatrix {
        &self.d_mat * &self.a_mat
    }

    /// The zero-increment eigenvector `e_{2n+1}`.
    pub fn y_zero(&self) -> CVector {
        let m = self.a_mat.nrows();
        let mut y = CVector::zeros(m);
        y[m - 1] = ONE;
        y
    }
}

/// The closed-form blocks
/// `A = [[0, I, 0], [-I, 0, 0], [0, 0, 0]]` and
/// `D = [[B, -H, 0], [-H^T, 0, 0], [0, 0, -tr H]]`
/// in `(n, n, 1)` block sizes.
pub fn build_ad(spec: &FilterSpec) -> (RMatrix, RMatrix) {
    let n = spec.dim();
    let m = 2 * n + 1;
    let mut a = RMatrix::zeros(m, m);
    let mut d = RMatrix::zeros(m, m);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        a[(n + i, i)] = -1.0;
    }
    let h = spec.h();
    let b = spec.b();
    for i in 0..n {
        for j in 0..n {
            d[(i, j)] = b[(i, j)];
            d[(i, n + j)] = -h[(i, j)];
            d[(n + i, j)] = -h[(j, i)];
        }
    }
    d[(m - 1, m - 1)] = -h.trace();
    (a, d)
}

/// Assemble the ladder eigensystem from the filter modes and certify the
/// operator identities numerically before returning.
pub fn ladder_eigensystem(spec: &FilterSpec, modes: &FilterModes) -> Result<LadderSystem> {
    let n = spec.dim();
    let (a_mat, d_mat) = build_ad(spec);
    let h = to_complex(spec.h());
    let b = to_complex(spec.b());
    let m = 2 * n + 1;

    let mut y_raising = Vec::with_capacity(n);
    let mut y_lowering = Vec::with_capacity(n);
    let mut w_raising = Vec::with_capacity(n);
    let mut w_lowering = Vec::with_capacity(n);

    for k in 0..n {
        let mu_k = modes.mu[k];
        let u_k = modes.u_col(k);
        let v_k = modes.v_col(k);
        let v_bar = v_k.map(|z| z.conj());

        // y^{-k} = (u_k, 0, 0)
        let mut y_m = CVector::zeros(m);
        for i in 0..n {
            y_m[i] = u_k[i];
        }
        // y^{k} = (-(H - mu_k I)^{-1} B conj(v_k), conj(v_k), 0)
        let shifted = &h - CMatrix::identity(n, n) * mu_k;
        let p_k = -(shifted
            .lu()
            .solve(&(&b * &v_bar))
            .ok_or(Error::ConsistencyFailure {
                context: format!("resolvent solve at mu_{k}"),
                residual: f64::INFINITY,
                tol: 0.0,
            })?);
        let mut y_p = CVector::zeros(m);
        for i in 0..n {
            y_p[i] = p_k[i];
            y_p[n + i] = v_bar[i];
        }
        // w^{k} = (0, conj(u_k), 0); this sign makes <w^k, y^k> = +1
        let mut w_p = CVector::zeros(m);
        for i in 0..n {
            w_p[n + i] = u_k[i].conj();
        }
        // w^{-k} = (v_k, (H - conj(mu_k) I)^{-1} B v_k, 0)
        let shifted_c = &h - CMatrix::identity(n, n) * mu_k.conj();
        let tail = shifted_c
            .lu()
            .solve(&(&b * &v_k))
            .ok_or(Error::ConsistencyFailure {
                context: format!("adjoint resolvent solve at mu_{k}"),
                residual: f64::INFINITY,
                tol: 0.0,
            })?;
        let mut w_m = CVector::zeros(m);
        for i in 0..n {
            w_m[i] = v_k[i];
            w_m[n + i] = tail[i];
        }

        y_lowering.push(y_m);
        y_raising.push(y_p);
        w_raising.push(w_p);
        w_lowering.push(w_m);
    }

    let (alpha, beta) = alpha_beta(spec, modes)?;

    let sys = LadderSystem {
        a_mat,
        d_mat,
        mu: modes.mu.clone(),
        mu0: -spec.h().trace(),
        y_raising,
        y_lowering,
        w_raising,
        w_lowering,
        alpha,
        beta,
    };
    verify_ladder(&sys)?;
    Ok(sys)
}

/// Coefficients expressing the readout in ladder operators:
/// `alpha_k = (U^T a)_k` and
/// `beta_k = -sum_m conj(alpha_m) <v_k, B v_m> / (conj(mu_m) + mu_k)`,
/// with the expansion `a = sum_k alpha_k conj(v_k)` checked to 1e-10.
#[allow(clippy::needless_range_loop)]
pub fn alpha_beta(
    spec: &FilterSpec,
    modes: &FilterModes,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let n = spec.dim();
    let a = numerics::to_complex_vec(spec.a());
    let b = to_complex(spec.b());

    let mut alpha = Vec::with_capacity(n);
    for k in 0..n {
        let u_k = modes.u_col(k);
        alpha.push((u_k.transpose() * &a)[(0, 0)]);
    }

    let mut beta = Vec::with_capacity(n);
    for k in 0..n {
        let v_k = modes.v_col(k);
        let mut sum = Complex64::new(0.0, 0.0);
        for mth in 0..n {
            let v_m = modes.v_col(mth);
            let quad = v_k.dotc(&(&b * &v_m));
            sum -= alpha[mth].conj() * quad / (modes.mu[mth].conj() + modes.mu[k]);
        }
        beta.push(sum);
    }

    // consistency: a = sum_k alpha_k conj(v_k)
    let mut recon = CVector::zeros(n);
    for k in 0..n {
        recon += modes.v_col(k).map(|z| z.conj()) * alpha[k];
    }
    let err = (&recon - &a).norm();
    let scale = a.norm().max(1.0);
    if err > 1e-10 * scale {
        return Err(Error::ConsistencyFailure {
            context: "readout expansion a = sum alpha_k conj(v_k)".into(),
            residual: err,
            tol: 1e-10 * scale,
        });
    }
    Ok((alpha, beta))
}

/// Numeric certificates for the ladder identities; the first violated one
/// comes back as an error carrying the residual.
fn verify_ladder(sys: &LadderSystem) -> Result<()> {
    let n = sys.dim();
    let t = to_complex(&sys.t_mat());
    let a = to_complex(&sys.a_mat);
    let t_scale = sys.t_mat().norm().max(1.0);

    // eigen-residuals of T
    for k in 0..n {
        let rp = (&t * &sys.y_raising[k] - &sys.y_raising[k] * sys.mu[k]).norm();
        let rm = (&t * &sys.y_lowering[k] + &sys.y_lowering[k] * sys.mu[k]).norm();
        let scale = t_scale * sys.y_raising[k].norm().max(sys.y_lowering[k].norm());
        if rp > 1e-10 * scale || rm > 1e-10 * scale {
            return Err(Error::ConsistencyFailure {
                context: format!("ladder eigenvector residual at mode {k}"),
                residual: rp.max(rm),
                tol: 1e-10 * scale,
            });
        }
    }

    // commutators: (y^{-j})^T A y^{k} = delta_jk, (y^{j})^T A y^{k} = 0
    let y_scale: f64 = sys
        .y_raising
        .iter()
        .chain(sys.y_lowering.iter())
        .map(|y| y.norm())
        .fold(1.0, f64::max);
    let tol = 1e-10 * y_scale * y_scale * sys.a_mat.norm().max(1.0);
    for j in 0..n {
        for k in 0..n {
            let lower_raise = (sys.y_lowering[j].transpose() * &a * &sys.y_raising[k])[(0, 0)];
            let expect = if j == k {
                ONE
            } else {
                Complex64::new(0.0, 0.0)
            };
            let raise_raise = (sys.y_raising[j].transpose() * &a * &sys.y_raising[k])[(0, 0)];
            if (lower_raise - expect).norm() > tol || raise_raise.norm() > tol {
                return Err(Error::ConsistencyFailure {
                    context: format!("ladder commutator identity ({j},{k})"),
                    residual: (lower_raise - expect).norm().max(raise_raise.norm()),
                    tol,
                });
            }
        }
    }

    // decomposition: sum_{k=-n..n} mu_{|k|} y^{-k} (y^{k})^T = D with
    // mu_0 = -tr H; the k and -k legs are transposes with equal weight
    let m = 2 * n + 1;
    let mut d_rebuilt = CMatrix::zeros(m, m);
    for k in 0..n {
        d_rebuilt += &sys.y_lowering[k] * sys.y_raising[k].transpose() * sys.mu[k];
        d_rebuilt += &sys.y_raising[k] * sys.y_lowering[k].transpose() * sys.mu[k];
    }
    let y0 = sys.y_zero();
    d_rebuilt += &y0 * y0.transpose() * Complex64::new(sys.mu0, 0.0);
    let d = to_complex(&sys.d_mat);
    let err = (&d_rebuilt - &d).norm();
    let d_scale = sys.d_mat.norm().max(1e-300);
    if err > 1e-9 * d_scale {
        return Err(Error::ConsistencyFailure {
            context: "generator decomposition over ladder products".into(),
            residual: err / d_scale,
            tol: 1e-9,
        });
    }
    Ok(())
}
