//! Non-perturbative growth rate for two-dimensional filters.
//!
//! For the filter family `H = [[-mu1, 0], [beta, -mu2]]`, `B = diag(1, 0)`
//! the marginal moments in `s2` close into a recursion, and expanding the
//! `s1` dependence in the weighted Hermite family
//! `phi_k(s1) = H_k(sqrt(mu1) s1) exp(-mu1 s1^2)` (recursion
//! `s1 phi_k = (phi_{k+1} + 2k phi_{k-1}) / (2 sqrt(mu1))`, never
//! re-normalized) turns the eigenvalue problem into a finite matrix `L`
//! once `j <= N_m` moments and `k <= N_h` Hermite modes are kept:
//!
//! ```text
//! lambda c_j^k = (Gamma0 - (k mu1 + j mu2) I) c_j^k
//!              + (j beta / (2 sqrt(mu1))) (c_{j-1}^{k-1} + 2(k+1) c_{j-1}^{k+1})
//!              + (eps a1 / (2 sqrt(mu1))) Gamma1 (c_j^{k-1} + 2(k+1) c_j^{k+1})
//!              + eps a2 Gamma1 c_{j+1}^k
//! ```
//!
//! Index ranges are inclusive, so `L` is `(N_m+1)(N_h+1)J` square. The
//! growth rate `lambda(eps)` is the eigenvalue of largest real part.

use crate::filter::FilterSpec;
use crate::moments::MomentOperator;
use crate::numerics::{eigenvalues, to_complex, RMatrix};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;

/// Parameters of the two-dimensional filter family.
#[derive(Debug, Clone, Copy)]
pub struct Filter2Spec {
    mu1: f64,
    mu2: f64,
    beta: f64,
    a1: f64,
    a2: f64,
}

impl Filter2Spec {
    pub fn new(mu1: f64, mu2: f64, beta: f64, a1: f64, a2: f64) -> Result<Self> {
        if !(mu1 > 0.0 && mu2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "decay rates must be positive: mu1 = {mu1}, mu2 = {mu2}"
            )));
        }
        if mu1 == mu2 {
            return Err(Error::InvalidArgument(
                "mu1 = mu2 gives a repeated drift eigenvalue".into(),
            ));
        }
        if beta == 0.0 {
            return Err(Error::InvalidArgument(
                "beta = 0 makes (H, B) uncontrollable".into(),
            ));
        }
        if ![mu1, mu2, beta, a1, a2].iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            mu1,
            mu2,
            beta,
            a1,
            a2,
        })
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    /// The equivalent general filter `(H, B, a)`.
    pub fn to_filter_spec(&self) -> FilterSpec {
        FilterSpec::filter2(self.mu1, self.mu2, self.beta, self.a1, self.a2)
            .expect("validated on construction")
    }
}

/// Truncation orders: `s2` moments `j <= n_m`, Hermite modes `k <= n_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationConfig {
    pub n_m: usize,
    pub n_h: usize,
}

impl TruncationConfig {
    pub fn new(n_m: usize, n_h: usize) -> Result<Self> {
        if n_m < 2 || n_h < 2 {
            return Err(Error::InvalidArgument(format!(
                "truncation orders must be >= 2, got ({n_m}, {n_h})"
            )));
        }
        Ok(Self { n_m, n_h })
    }

    /// Matrix dimension `(N_m + 1)(N_h + 1) J`.
    pub fn dim(&self, j_moments: usize) -> usize {
        (self.n_m + 1) * (self.n_h + 1) * j_moments
    }

    fn refined(&self, step: usize) -> Self {
        Self {
            n_m: self.n_m + step,
            n_h: self.n_h + step,
        }
    }
}

/// Growth rate at one amplitude, with the refinement delta when a
/// convergence study produced it.
#[derive(Debug, Clone)]
pub struct TruncationResult {
    pub epsilon: f64,
    pub lambda: Complex64,
    pub config: TruncationConfig,
    /// `|lambda - lambda_refined|` from the last refinement step, when run.
    pub delta: Option<f64>,
    pub converged: bool,
}

/// Assemble the truncated generator `L` for the given amplitude.
#[allow(clippy::int_plus_one)] // `k + 1 <= n_h` mirrors the stencil bound
pub fn assemble_l(
    op: &MomentOperator,
    f2: &Filter2Spec,
    cfg: &TruncationConfig,
    eps: f64,
) -> RMatrix {
    let j_dim = op.basis.len();
    let dim = cfg.dim(j_dim);
    let (n_m, n_h) = (cfg.n_m, cfg.n_h);
    let root = 2.0 * f2.mu1.sqrt();
    let mut l = RMatrix::zeros(dim, dim);

    let block = |j: usize, k: usize| (j * (n_h + 1) + k) * j_dim;
    let add = |l: &mut RMatrix, row: usize, col: usize, m: &RMatrix, scale: f64| {
        if scale == 0.0 {
            return;
        }
        for r in 0..j_dim {
            for c in 0..j_dim {
                let v = m[(r, c)];
                if v != 0.0 {
                    l[(row + r, col + c)] += scale * v;
                }
            }
        }
    };
    let identity = RMatrix::identity(j_dim, j_dim);

    for j in 0..=n_m {
        for k in 0..=n_h {
            let row = block(j, k);
            add(&mut l, row, row, &op.gamma0, 1.0);
            add(
                &mut l,
                row,
                row,
                &identity,
                -(k as f64 * f2.mu1 + j as f64 * f2.mu2),
            );
            if j >= 1 {
                let coef = j as f64 * f2.beta / root;
                if k >= 1 {
                    add(&mut l, row, block(j - 1, k - 1), &identity, coef);
                }
                if k + 1 <= n_h {
                    add(
                        &mut l,
                        row,
                        block(j - 1, k + 1),
                        &identity,
                        coef * 2.0 * (k + 1) as f64,
                    );
                }
            }
            let forcing = eps * f2.a1 / root;
            if k >= 1 {
                add(&mut l, row, block(j, k - 1), &op.gamma1, forcing);
            }
            if k + 1 <= n_h {
                add(
                    &mut l,
                    row,
                    block(j, k + 1),
                    &op.gamma1,
                    forcing * 2.0 * (k + 1) as f64,
                );
            }
            if j + 1 <= n_m {
                add(&mut l, row, block(j + 1, k), &op.gamma1, eps * f2.a2);
            }
        }
    }
    l
}

/// Eigenvalue of `L` with the largest real part (full dense spectrum).
pub fn top_eigenvalue(l: &RMatrix) -> Result<Complex64> {
    spectrum(l)?
        .into_iter()
        .max_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        })
        .ok_or_else(|| Error::InvalidArgument("empty matrix".into()))
}

/// Full spectrum of `L` (balanced; eigenvalues only).
pub fn spectrum(l: &RMatrix) -> Result<Vec<Complex64>> {
    eigenvalues(&to_complex(l))
}

/// Growth rate at one amplitude with the configured truncation.
pub fn solve_at(
    op: &MomentOperator,
    f2: &Filter2Spec,
    cfg: &TruncationConfig,
    eps: f64,
) -> Result<Complex64> {
    top_eigenvalue(&assemble_l(op, f2, cfg, eps))
}

/// Growth rates for a list of amplitudes, solved in parallel.
pub fn sweep(
    op: &MomentOperator,
    f2: &Filter2Spec,
    cfg: &TruncationConfig,
    eps_list: &[f64],
) -> Result<Vec<TruncationResult>> {
    eps_list
        .par_iter()
        .map(|&eps| {
            solve_at(op, f2, cfg, eps).map(|lambda| TruncationResult {
                epsilon: eps,
                lambda,
                config: *cfg,
                delta: None,
                converged: true,
            })
        })
        .collect()
}

/// Refine `(N_m, N_h)` in steps of +2 until the top eigenvalue moves less
/// than `tol`, the dimension exceeds `dim_cap`, or `max_steps` refinements
/// ran. Returns the sequence of iterates; the last one carries the final
/// delta and the convergence verdict.
pub fn convergence_study(
    op: &MomentOperator,
    f2: &Filter2Spec,
    base: &TruncationConfig,
    eps: f64,
    tol: f64,
    dim_cap: usize,
    max_steps: usize,
) -> Result<Vec<TruncationResult>> {
    let mut results: Vec<TruncationResult> = Vec::new();
    let mut cfg = *base;
    let mut lambda = solve_at(op, f2, &cfg, eps)?;
    results.push(TruncationResult {
        epsilon: eps,
        lambda,
        config: cfg,
        delta: None,
        converged: !tol.is_finite(),
    });
    if !tol.is_finite() {
        return Ok(results);
    }
    for _ in 0..max_steps {
        let next_cfg = cfg.refined(2);
        if next_cfg.dim(op.basis.len()) > dim_cap {
            break;
        }
        let next = solve_at(op, f2, &next_cfg, eps)?;
        let delta = (next - lambda).norm();
        let converged = delta < tol;
        results.push(TruncationResult {
            epsilon: eps,
            lambda: next,
            config: next_cfg,
            delta: Some(delta),
            converged,
        });
        if converged {
            return Ok(results);
        }
        cfg = next_cfg;
        lambda = next;
    }
    // cap reached: advisory, last entry keeps converged = false
    Ok(results)
}

/// Critical amplitude found by bisection.
#[derive(Debug, Clone)]
pub struct CriticalEpsilon {
    pub eps_star: f64,
    pub bracket: (f64, f64),
    pub lambda_re: f64,
    pub iterations: usize,
}

/// Bisect `Re lambda(eps) = 0` over `bracket`; the sign must change.
pub fn critical_epsilon(
    op: &MomentOperator,
    f2: &Filter2Spec,
    cfg: &TruncationConfig,
    bracket: (f64, f64),
) -> Result<CriticalEpsilon> {
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("bad bracket [{lo}, {hi}]")));
    }
    let f_lo = solve_at(op, f2, cfg, lo)?.re;
    let f_hi = solve_at(op, f2, cfg, hi)?.re;
    if f_lo == 0.0 {
        return Ok(CriticalEpsilon {
            eps_star: lo,
            bracket,
            lambda_re: f_lo,
            iterations: 0,
        });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let f_mid = solve_at(op, f2, cfg, mid)?.re;
        if f_mid.abs() < 1e-9 || (hi - lo) < 1e-13 || iterations >= 200 {
            return Ok(CriticalEpsilon {
                eps_star: mid,
                bracket,
                lambda_re: f_mid,
                iterations,
            });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}
