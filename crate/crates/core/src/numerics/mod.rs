//! Dense linear-algebra kernel.
//!
//! Everything downstream works on small dense matrices (a few hundred rows
//! at most), so all solvers here are direct O(n^3) methods: a complex
//! Hessenberg + shifted-QR eigensolver with left/right eigenvectors, a
//! Lyapunov solver, and the matrix exponential. Matrix storage, LU solves,
//! SVD and symmetric eigendecompositions are delegated to `nalgebra`.

mod eig;
mod lyapunov;

pub use eig::{
    complex_schur, eig_dense, eig_dense_real, eigenvalues, EigenDecomposition, SchurDecomposition,
};
pub use lyapunov::lyapunov_solve;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Lift a real matrix into complex storage.
pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Lift a real vector into complex storage.
pub fn to_complex_vec(v: &RVector) -> CVector {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Standard inner product on C^n, conjugate-linear in the first argument.
pub fn inner(x: &CVector, y: &CVector) -> Complex64 {
    x.dotc(y)
}

/// Matrix exponential e^{M t}.
///
/// Pade scaling-and-squaring via `nalgebra`; adequate to ~1e-12 relative on
/// the stable matrices used here.
pub fn expm(m: &RMatrix, t: f64) -> RMatrix {
    (m * t).exp()
}

/// Largest absolute entry, as a cheap scale for tolerance tests.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Kronecker product A (x) B (dense, real).
pub(crate) fn kron(a: &RMatrix, b: &RMatrix) -> RMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = RMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                for k in 0..br {
                    for l in 0..bc {
                        out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn check_square_finite(m: &CMatrix) -> crate::Result<()> {
    if m.nrows() != m.ncols() {
        return Err(crate::Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(crate::Error::NonFinite);
    }
    Ok(())
}
