//! Continuous Lyapunov equation `H X + X H^T = -B` for stable `H`.

use super::{eig_dense_real, kron, to_complex, CMatrix, RMatrix};
use crate::{Error, Result};
use num_complex::Complex64;

/// Relative gap below which the eigendecomposition route is abandoned in
/// favor of the Kronecker-product linear solve.
const NEAR_DEGENERATE_GAP: f64 = 1e-8;

const RESIDUAL_TOL: f64 = 1e-10;

/// Solve `H X + X H^T = -B` with `H` stable (all eigenvalues in the open
/// left half-plane). The result is symmetrized before returning.
///
/// Primary route: eigendecomposition of `H`, dividing by pairwise
/// eigenvalue sums. Near-degenerate spectra fall back to a dense linear
/// solve of the Kronecker-product system.
pub fn lyapunov_solve(h: &RMatrix, b: &RMatrix) -> Result<RMatrix> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::NotSquare {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "Lyapunov: H is {n}x{n} but B is {}x{}",
                b.nrows(),
                b.ncols()
            ),
        });
    }
    if h.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }

    let eig = eig_dense_real(h)?;
    if let Some(bad) = eig.values.iter().find(|z| z.re >= 0.0) {
        return Err(Error::UnstableDrift { value: *bad });
    }

    let b_scale = b.norm().max(1e-300);
    if eig.min_relative_gap() > NEAR_DEGENERATE_GAP && eig.defective.is_empty() {
        let x = solve_by_eig(&eig.right, &eig.values, b)?;
        if residual(h, &x, b) <= RESIDUAL_TOL * b_scale {
            return Ok(x);
        }
    }

    let x = solve_by_kron(h, b)?;
    let res = residual(h, &x, b);
    if res > RESIDUAL_TOL * b_scale {
        return Err(Error::ConsistencyFailure {
            context: "Lyapunov residual".into(),
            residual: res,
            tol: RESIDUAL_TOL * b_scale,
        });
    }
    Ok(x)
}

fn residual(h: &RMatrix, x: &RMatrix, b: &RMatrix) -> f64 {
    (h * x + x * h.transpose() + b).norm()
}

/// X = U X' U^T with X'_{jk} = -B'_{jk} / (sigma_j + sigma_k),
/// B' = U^{-1} B U^{-T}.
fn solve_by_eig(u: &CMatrix, sigma: &[Complex64], b: &RMatrix) -> Result<RMatrix> {
    let n = b.nrows();
    let lu = u.clone().lu();
    let u_inv = lu.try_inverse().ok_or_else(|| Error::ConsistencyFailure {
        context: "eigenvector matrix not invertible".into(),
        residual: f64::INFINITY,
        tol: 0.0,
    })?;
    let b_prime = &u_inv * to_complex(b) * u_inv.transpose();
    let mut x_prime = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            x_prime[(j, k)] = -b_prime[(j, k)] / (sigma[j] + sigma[k]);
        }
    }
    let x = u * x_prime * u.transpose();
    Ok(realize_symmetric(&x))
}

/// Dense solve of (I (x) H + H (x) I) vec(X) = -vec(B), column-stacked.
fn solve_by_kron(h: &RMatrix, b: &RMatrix) -> Result<RMatrix> {
    let n = h.nrows();
    let id = RMatrix::identity(n, n);
    let m = kron(&id, h) + kron(h, &id);
    let rhs = nalgebra::DVector::from_column_slice(b.as_slice()) * -1.0;
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::ConsistencyFailure {
            context: "Kronecker Lyapunov system singular".into(),
            residual: f64::INFINITY,
            tol: 0.0,
        })?;
    let x = RMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(0.5 * (&x + x.transpose()))
}

fn realize_symmetric(x: &CMatrix) -> RMatrix {
    let n = x.nrows();
    let re = RMatrix::from_fn(n, n, |i, j| x[(i, j)].re);
    0.5 * (&re + re.transpose())
}
