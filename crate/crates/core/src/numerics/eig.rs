//! Dense non-symmetric eigendecomposition in complex arithmetic.
//!
//! Householder reduction to upper Hessenberg form followed by implicit
//! single-shift (Wilkinson) QR with deflation gives the complex Schur form
//! `M = Q T Q*`. Right eigenvectors come from back-substitution on `T`,
//! left eigenvectors from forward substitution on `T*`; both are rotated
//! back by `Q`. Real input matrices are handled in complex arithmetic
//! throughout — at the matrix sizes used here the 2x cost is irrelevant.

use super::{check_square_finite, to_complex, CMatrix, CVector, RMatrix};
use crate::{Error, Result};
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Unitary Schur decomposition `M = Q T Q*` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct SchurDecomposition {
    pub q: CMatrix,
    pub t: CMatrix,
}

/// Eigenvalues with right and left eigenvectors.
///
/// Right vectors have unit 2-norm; left vectors are scaled so that
/// `<w_i, v_i> = 1`, which makes `<w_i, v_j> = delta_ij` whenever the
/// spectrum is simple. Pairs whose raw overlap is below `DEFECT_TOL` are
/// listed in `defective` and left unit-normalized.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues sorted by descending real part (ties: descending imaginary part).
    pub values: Vec<Complex64>,
    /// Right eigenvectors as columns, unit 2-norm.
    pub right: CMatrix,
    /// Left eigenvectors as columns: `w_i* M = lambda_i w_i*`.
    pub left: CMatrix,
    /// Indices whose left/right overlap fell below the defect tolerance.
    pub defective: Vec<usize>,
    /// Largest right-eigenpair residual `||M v - lambda v||`, for diagnostics.
    pub max_residual: f64,
}

const DEFECT_TOL: f64 = 1e-10;

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Smallest pairwise gap |lambda_i - lambda_j| relative to the spectral scale.
    pub fn min_relative_gap(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let scale = self
            .values
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut min = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                min = min.min((self.values[i] - self.values[j]).norm() / scale);
            }
        }
        min
    }

    /// Error out if any pair of eigenvalues is closer than `rel_tol`
    /// relative to the spectral scale.
    pub fn require_simple(&self, rel_tol: f64) -> Result<()> {
        let gap = self.min_relative_gap();
        if gap < rel_tol {
            // report one offending value
            let n = self.values.len();
            let scale = self
                .values
                .iter()
                .map(|z| z.norm())
                .fold(0.0f64, f64::max)
                .max(1e-300);
            for i in 0..n {
                for j in (i + 1)..n {
                    if (self.values[i] - self.values[j]).norm() / scale < rel_tol {
                        return Err(Error::RepeatedEigenvalue {
                            value: self.values[i],
                            gap,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn require_nondefective(&self) -> Result<()> {
        if let Some(&index) = self.defective.first() {
            let v = self.right.column(index);
            let w = self.left.column(index);
            return Err(Error::DefectiveEigenpair {
                index,
                overlap: w.dotc(&v).norm(),
            });
        }
        Ok(())
    }
}

/// Diagonal balancing (Parlett-Reinsch): find powers of two `d_i` so that
/// row and column norms of `D^{-1} M D` are comparable. Scaling by exact
/// powers of two keeps the spectrum bit-identical while taming the huge
/// eigenvalue condition numbers of strongly non-normal matrices.
fn balance(m: &CMatrix) -> (CMatrix, Vec<f64>) {
    const RADIX: f64 = 2.0;
    let n = m.nrows();
    let mut a = m.clone();
    let mut scale = vec![1.0f64; n];
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| a[(j, i)].norm()).sum();
            let mut r: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].norm()).sum();
            if c == 0.0 || r == 0.0 || !(c.is_finite() && r.is_finite()) {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / RADIX {
                c *= RADIX;
                r /= RADIX;
                f *= RADIX;
            }
            while c >= r * RADIX {
                c /= RADIX;
                r *= RADIX;
                f /= RADIX;
            }
            if (c + r) < 0.95 * s && f != 1.0 {
                converged = false;
                scale[i] *= f;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
    (a, scale)
}

/// Complex Givens rotation: real `c` and complex `s` with `c^2 + |s|^2 = 1`
/// such that `[c s; -conj(s) c] (x, z)^T = (r, 0)^T`.
fn givens(x: Complex64, z: Complex64) -> (f64, Complex64) {
    let xn = x.norm();
    let zn = z.norm();
    if zn == 0.0 {
        return (1.0, ZERO);
    }
    if xn == 0.0 {
        return (0.0, z.conj() / zn);
    }
    let t = xn.hypot(zn);
    (xn / t, (x / xn) * (z.conj() / t))
}

/// Householder reduction to upper Hessenberg form: `A = Q H Q*`.
fn hessenberg(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = CMatrix::identity(n, n);
    if n < 3 {
        return (q, h);
    }
    for k in 0..n - 2 {
        // reflector for column k, rows k+1..n
        let m = n - k - 1;
        let mut u = CVector::zeros(m);
        let mut norm2 = 0.0;
        for i in 0..m {
            let z = h[(k + 1 + i, k)];
            u[i] = z;
            norm2 += z.norm_sqr();
        }
        let norm = norm2.sqrt();
        if norm <= f64::EPSILON * super::max_abs(&h) {
            continue;
        }
        let x0 = u[0];
        let phi = if x0.norm() == 0.0 {
            ONE
        } else {
            x0 / x0.norm()
        };
        u[0] += phi * norm;
        let un = u.norm();
        if un == 0.0 {
            continue;
        }
        u /= Complex64::new(un, 0.0);

        // rows k+1..n of columns k..n: H <- (I - 2uu*) H
        for col in k..n {
            let mut dot = ZERO;
            for i in 0..m {
                dot += u[i].conj() * h[(k + 1 + i, col)];
            }
            let dot = dot * 2.0;
            for i in 0..m {
                let val = h[(k + 1 + i, col)] - u[i] * dot;
                h[(k + 1 + i, col)] = val;
            }
        }
        // columns k+1..n of all rows: H <- H (I - 2uu*)
        for row in 0..n {
            let mut dot = ZERO;
            for i in 0..m {
                dot += h[(row, k + 1 + i)] * u[i];
            }
            let dot = dot * 2.0;
            for i in 0..m {
                let val = h[(row, k + 1 + i)] - dot * u[i].conj();
                h[(row, k + 1 + i)] = val;
            }
        }
        // accumulate Q <- Q (I - 2uu*)
        for row in 0..n {
            let mut dot = ZERO;
            for i in 0..m {
                dot += q[(row, k + 1 + i)] * u[i];
            }
            let dot = dot * 2.0;
            for i in 0..m {
                let val = q[(row, k + 1 + i)] - dot * u[i].conj();
                q[(row, k + 1 + i)] = val;
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
        // the reflector maps the column onto -phi*norm e1 exactly
        h[(k + 1, k)] = -phi * norm;
    }
    (q, h)
}

fn wilkinson_shift(t: &CMatrix, hi: usize) -> Complex64 {
    let a = t[(hi - 1, hi - 1)];
    let b = t[(hi - 1, hi)];
    let c = t[(hi, hi - 1)];
    let d = t[(hi, hi)];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + b * c * 4.0).sqrt();
    let l1 = (tr + disc) * 0.5;
    let l2 = (tr - disc) * 0.5;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Complex Schur decomposition via implicit single-shift QR with deflation.
pub fn complex_schur(a: &CMatrix) -> Result<SchurDecomposition> {
    check_square_finite(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SchurDecomposition {
            q: CMatrix::identity(0, 0),
            t: CMatrix::identity(0, 0),
        });
    }
    let (mut q, mut t) = hessenberg(a);
    let norm_t = t.norm().max(1e-300);
    let eps = f64::EPSILON;

    let mut hi = n - 1;
    let mut sweeps_on_block = 0usize;
    let mut total_sweeps = 0usize;
    let max_total = 60 * n.max(4);

    while hi > 0 {
        // deflate negligible subdiagonals
        let mut lo = hi;
        while lo > 0 {
            let s = t[(lo - 1, lo - 1)].norm() + t[(lo, lo)].norm();
            let thresh = eps * if s > 0.0 { s } else { norm_t };
            if t[(lo, lo - 1)].norm() <= thresh {
                t[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            sweeps_on_block = 0;
            continue;
        }

        total_sweeps += 1;
        sweeps_on_block += 1;
        if total_sweeps > max_total {
            return Err(Error::EigNonConvergence {
                iterations: total_sweeps,
            });
        }

        let sigma = if sweeps_on_block.is_multiple_of(14) {
            // exceptional shift to break rare cycles
            t[(hi, hi)] + Complex64::new(1.5 * t[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(&t, hi)
        };

        // implicit QR sweep on the active block lo..=hi
        let mut x = t[(lo, lo)] - sigma;
        let mut z = t[(lo + 1, lo)];
        for k in lo..hi {
            let (c, s) = givens(x, z);
            let sc = s.conj();
            let col_start = if k == lo { lo } else { k - 1 };
            for col in col_start..n {
                let u1 = t[(k, col)];
                let u2 = t[(k + 1, col)];
                t[(k, col)] = u1 * c + s * u2;
                t[(k + 1, col)] = -sc * u1 + u2 * c;
            }
            let row_end = (k + 2).min(hi);
            for row in 0..=row_end {
                let u1 = t[(row, k)];
                let u2 = t[(row, k + 1)];
                t[(row, k)] = u1 * c + sc * u2;
                t[(row, k + 1)] = -s * u1 + u2 * c;
            }
            for row in 0..n {
                let u1 = q[(row, k)];
                let u2 = q[(row, k + 1)];
                q[(row, k)] = u1 * c + sc * u2;
                q[(row, k + 1)] = -s * u1 + u2 * c;
            }
            if k + 1 < hi {
                x = t[(k + 1, k)];
                z = t[(k + 2, k)];
            }
        }
    }

    // clean the strictly lower triangle
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok(SchurDecomposition { q, t })
}

/// Right eigenvector of the triangular factor for the eigenvalue at
/// diagonal position `i`, by back-substitution.
fn triangular_right_vec(t: &CMatrix, i: usize, smallnum: f64) -> CVector {
    let n = t.nrows();
    let lambda = t[(i, i)];
    let mut x = CVector::zeros(n);
    x[i] = ONE;
    for j in (0..i).rev() {
        let mut num = ZERO;
        for k in j + 1..=i {
            num += t[(j, k)] * x[k];
        }
        let mut den = t[(j, j)] - lambda;
        if den.norm() < smallnum {
            den = Complex64::new(smallnum, 0.0);
        }
        x[j] = -num / den;
    }
    x
}

/// Left eigenvector from forward substitution on `T*` (lower triangular):
/// solves `T* y = conj(lambda_i) y`.
fn triangular_left_vec(t: &CMatrix, i: usize, smallnum: f64) -> CVector {
    let n = t.nrows();
    let lambda_c = t[(i, i)].conj();
    let mut y = CVector::zeros(n);
    y[i] = ONE;
    for j in i + 1..n {
        let mut num = ZERO;
        for k in i..j {
            num += t[(k, j)].conj() * y[k];
        }
        let mut den = t[(j, j)].conj() - lambda_c;
        if den.norm() < smallnum {
            den = Complex64::new(smallnum, 0.0);
        }
        y[j] = -num / den;
    }
    y
}

/// Eigenvalues only, cheaper than [`eig_dense`].
///
/// Before iterating, the sparsity graph is condensed into strongly
/// connected components: under the corresponding permutation the matrix
/// is exactly block triangular, so the spectrum is the union of the
/// component spectra. This is the graph-level generalization of the
/// permutation phase of classical balancing, and it sidesteps the
/// ill-conditioning that long one-way coupling chains inflict on the
/// corner eigenvalues of structured matrices.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    check_square_finite(a)?;
    let n = a.nrows();
    let components = strongly_connected_components(a);
    let mut values = Vec::with_capacity(n);
    for comp in components {
        if comp.len() == 1 {
            values.push(a[(comp[0], comp[0])]);
            continue;
        }
        let sub = CMatrix::from_fn(comp.len(), comp.len(), |i, j| a[(comp[i], comp[j])]);
        let (balanced, _) = balance(&sub);
        let schur = complex_schur(&balanced)?;
        values.extend((0..comp.len()).map(|i| schur.t[(i, i)]));
    }
    Ok(values)
}

/// Tarjan's algorithm on the sparsity graph (exact zero off-diagonals
/// carry no edge), iterative to keep the stack shallow.
fn strongly_connected_components(a: &CMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && a[(i, j)] != ZERO).collect())
        .collect();

    let mut index = vec![usize::MAX; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components = Vec::new();
    // (node, neighbor cursor)
    let mut work: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        work.push((root, 0));
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut cursor)) = work.last_mut() {
            if *cursor < adjacency[v].len() {
                let w = adjacency[v][*cursor];
                *cursor += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("component member");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    components.push(comp);
                }
            }
        }
    }
    components
}

/// Full eigendecomposition of a dense complex matrix (with balancing).
pub fn eig_dense(a: &CMatrix) -> Result<EigenDecomposition> {
    check_square_finite(a)?;
    let n = a.nrows();
    let (balanced, scale) = balance(a);
    let schur = complex_schur(&balanced)?;
    let t = &schur.t;
    let q = &schur.q;
    let smallnum = f64::EPSILON * t.norm().max(1e-300);

    // extract per diagonal position, then sort
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (t[(i, i)], t[(j, j)]);
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });

    let mut values = Vec::with_capacity(n);
    let mut right = CMatrix::zeros(n, n);
    let mut left = CMatrix::zeros(n, n);
    for (col, &pos) in order.iter().enumerate() {
        values.push(t[(pos, pos)]);
        // undo the balancing similarity on both vector families
        let mut v = q * triangular_right_vec(t, pos, smallnum);
        let mut w = q * triangular_left_vec(t, pos, smallnum);
        for i in 0..n {
            v[i] *= scale[i];
            w[i] /= scale[i];
        }
        let vn = v.norm();
        let wn = w.norm();
        right.set_column(col, &(v / Complex64::new(vn, 0.0)));
        left.set_column(col, &(w / Complex64::new(wn, 0.0)));
    }

    // bi-orthonormalize: scale w_i so <w_i, v_i> = 1
    let mut defective = Vec::new();
    for i in 0..n {
        let d = left.column(i).dotc(&right.column(i));
        if d.norm() < DEFECT_TOL {
            defective.push(i);
        } else {
            let scale = ONE / d.conj();
            let col = left.column(i) * scale;
            left.set_column(i, &col);
        }
    }

    let mut max_residual = 0.0f64;
    for (i, lambda) in values.iter().enumerate() {
        let v = right.column(i);
        let r = a * v - v * *lambda;
        max_residual = max_residual.max(r.norm());
    }

    Ok(EigenDecomposition {
        values,
        right,
        left,
        defective,
        max_residual,
    })
}

/// Eigendecomposition of a real matrix (computed in complex arithmetic).
pub fn eig_dense_real(a: &RMatrix) -> Result<EigenDecomposition> {
    eig_dense(&to_complex(a))
}
