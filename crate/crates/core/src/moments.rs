//! Generator matrices for the p-th marginal moments of the forced system.
//!
//! With `dx/dt = M x`, the monomial moments `<x^alpha>` with `|alpha| = p`
//! close under the linear dynamics: `d/dt x^alpha = sum_i alpha_i
//! x^{alpha - e_i} (M x)_i`. Collecting the monomials into a vector in
//! graded-lexicographic order (x1-major) gives a J x J generator per drift
//! matrix; `Gamma0` comes from `A0` and `Gamma1` from `A1`.

use crate::numerics::{eig_dense_real, CMatrix, RMatrix};
use crate::{Error, Result};
use num_complex::Complex64;

/// The forced linear system `dx/dt = (A0 + eps f(t) A1) x` together with
/// the moment order of interest.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    a0: RMatrix,
    a1: RMatrix,
    p: usize,
    epsilon: f64,
}

impl SystemSpec {
    pub fn new(a0: RMatrix, a1: RMatrix, p: usize, epsilon: f64) -> Result<Self> {
        let n = a0.nrows();
        if a0.ncols() != n {
            return Err(Error::NotSquare {
                rows: a0.nrows(),
                cols: a0.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "system dimension must be >= 1".into(),
            ));
        }
        if a1.nrows() != n || a1.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: format!("A1 is {}x{}, expected {n}x{n}", a1.nrows(), a1.ncols()),
            });
        }
        if p < 1 {
            return Err(Error::InvalidArgument("moment order p must be >= 1".into()));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "forcing amplitude must be finite and >= 0, got {epsilon}"
            )));
        }
        if a0.iter().chain(a1.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { a0, a1, p, epsilon })
    }

    /// The Mathieu oscillator `x'' + gamma x' + (omega0^2 + eps f) x = 0`
    /// in first-order form.
    pub fn mathieu(omega0: f64, gamma: f64, p: usize, epsilon: f64) -> Result<Self> {
        Self::new(
            RMatrix::from_row_slice(2, 2, &[0.0, 1.0, -omega0 * omega0, -gamma]),
            RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            p,
            epsilon,
        )
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn a0(&self) -> &RMatrix {
        &self.a0
    }

    pub fn a1(&self) -> &RMatrix {
        &self.a1
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.a0.clone(), self.a1.clone(), self.p, epsilon)
    }
}

/// Ordered monomial basis of total degree `p` in `N` variables.
///
/// Graded-lexicographic, x1-major: for `N = 2, p = 2` the order is
/// `x1^2, x1 x2, x2^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentBasis {
    n_vars: usize,
    degree: usize,
    indices: Vec<Vec<u32>>,
}

impl MomentBasis {
    pub fn new(n_vars: usize, degree: usize) -> Self {
        let mut indices = Vec::new();
        let mut current = vec![0u32; n_vars];
        enumerate(&mut indices, &mut current, 0, degree as u32);
        Self {
            n_vars,
            degree,
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.indices.iter().position(|a| a == alpha)
    }

    pub fn alpha(&self, i: usize) -> &[u32] {
        &self.indices[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.indices.iter()
    }

    /// Short label like `20` or `11` for CSV headers.
    pub fn label(&self, i: usize) -> String {
        self.indices[i]
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("")
    }
}

fn enumerate(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, var: usize, remaining: u32) {
    if var + 1 == current.len() {
        current[var] = remaining;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    // descending exponent on the leading variable gives x1-major order
    for e in (0..=remaining).rev() {
        current[var] = e;
        enumerate(out, current, var + 1, remaining - e);
        current[var] = 0;
    }
}

/// The pair of J x J moment generators for a system.
#[derive(Debug, Clone)]
pub struct MomentOperator {
    pub basis: MomentBasis,
    pub gamma0: RMatrix,
    pub gamma1: RMatrix,
}

/// Eigen-data of `Gamma0` with the dominant branch set.
#[derive(Debug, Clone)]
pub struct MomentEigen {
    /// Eigenvalues `nu_j`, sorted by descending real part.
    pub values: Vec<Complex64>,
    /// Right eigenvectors (columns), unit norm.
    pub phi: CMatrix,
    /// Normalized adjoint eigenvectors (columns): `<psi_k, phi_j> = delta_kj`.
    pub psi: CMatrix,
    /// Indices whose real part is within 1e-9 of the maximum.
    pub dominant: Vec<usize>,
}

/// Generator of the degree-p monomial moments under `dx/dt = M x`.
pub fn gamma_of(m: &RMatrix, basis: &MomentBasis) -> RMatrix {
    let j_dim = basis.len();
    let n = basis.n_vars();
    let mut gamma = RMatrix::zeros(j_dim, j_dim);
    for (row, alpha) in basis.iter().enumerate() {
        for i in 0..n {
            if alpha[i] == 0 {
                continue;
            }
            for j in 0..n {
                let mut target = alpha.clone();
                target[i] -= 1;
                target[j] += 1;
                let col = basis
                    .index_of(&target)
                    .expect("degree is preserved by the substitution");
                gamma[(row, col)] += alpha[i] as f64 * m[(i, j)];
            }
        }
    }
    gamma
}

/// Build `Gamma0` (from `A0`) and `Gamma1` (from `A1`) on the canonical basis.
pub fn build_gamma(sys: &SystemSpec) -> MomentOperator {
    let basis = MomentBasis::new(sys.dim(), sys.p());
    let gamma0 = gamma_of(sys.a0(), &basis);
    let gamma1 = gamma_of(sys.a1(), &basis);
    MomentOperator {
        basis,
        gamma0,
        gamma1,
    }
}

/// Eigen-data of the unforced generator. Fails if `Gamma0` is defective
/// (the analysis assumes a complete set of eigenvectors).
pub fn eig_gamma(op: &MomentOperator) -> Result<MomentEigen> {
    let eig = eig_dense_real(&op.gamma0)?;
    eig.require_nondefective()?;
    let max_re = eig
        .values
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * max_re.abs().max(1.0);
    let dominant: Vec<usize> = (0..eig.values.len())
        .filter(|&j| eig.values[j].re >= max_re - tol)
        .collect();
    Ok(MomentEigen {
        values: eig.values,
        phi: eig.right,
        psi: eig.left,
        dominant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn basis_order_for_two_vars() {
        let basis = MomentBasis::new(2, 2);
        assert_eq!(basis.len(), 3);
        assert_eq!(basis.alpha(0), &[2, 0]);
        assert_eq!(basis.alpha(1), &[1, 1]);
        assert_eq!(basis.alpha(2), &[0, 2]);
        let cubic = MomentBasis::new(2, 3);
        assert_eq!(cubic.len(), 4);
        assert_eq!(cubic.alpha(0), &[3, 0]);
        assert_eq!(cubic.alpha(3), &[0, 3]);
    }

    #[test]
    fn basis_size_is_binomial() {
        // J = C(N + p - 1, p)
        let basis = MomentBasis::new(3, 4);
        assert_eq!(basis.len(), 15);
        for alpha in basis.iter() {
            assert_eq!(alpha.iter().sum::<u32>(), 4);
        }
    }

    #[test]
    fn mathieu_second_moments_exact() {
        let (omega0, gamma) = (0.5, 0.01);
        let sys = SystemSpec::mathieu(omega0, gamma, 2, 0.0).unwrap();
        let op = build_gamma(&sys);
        let w2 = omega0 * omega0;
        let gamma0_expect = RMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                2.0,
                0.0,
                -w2,
                -gamma,
                1.0,
                0.0,
                -2.0 * w2,
                -2.0 * gamma,
            ],
        );
        let gamma1_expect =
            RMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(op.gamma0, gamma0_expect);
        assert_eq!(op.gamma1, gamma1_expect);
    }

    #[test]
    fn first_moments_reduce_to_drift() {
        let a0 = RMatrix::from_row_slice(3, 3, &[0.1, -2.0, 0.0, 1.0, 0.3, -0.7, 0.0, 0.5, -1.1]);
        let a1 = RMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let sys = SystemSpec::new(a0.clone(), a1.clone(), 1, 0.0).unwrap();
        let op = build_gamma(&sys);
        assert_eq!(op.gamma0, a0);
        assert_eq!(op.gamma1, a1);
    }

    /// Independent oracle: symbolic polynomial expansion of
    /// d/dt x^alpha = sum_i alpha_i x^{alpha - e_i} (M x)_i using a
    /// coefficient map over exponent vectors.
    fn gamma_symbolic(m: &RMatrix, basis: &MomentBasis) -> RMatrix {
        let j_dim = basis.len();
        let n = basis.n_vars();
        let mut out = RMatrix::zeros(j_dim, j_dim);
        for (row, alpha) in basis.iter().enumerate() {
            let mut poly: HashMap<Vec<u32>, f64> = HashMap::new();
            for i in 0..n {
                if alpha[i] == 0 {
                    continue;
                }
                // alpha_i * x^{alpha - e_i} * sum_j m_ij x_j
                let mut lowered = alpha.clone();
                lowered[i] -= 1;
                for j in 0..n {
                    let mut mono = lowered.clone();
                    mono[j] += 1;
                    *poly.entry(mono).or_insert(0.0) += alpha[i] as f64 * m[(i, j)];
                }
            }
            for (mono, coeff) in poly {
                out[(row, basis.index_of(&mono).unwrap())] += coeff;
            }
        }
        out
    }

    #[test]
    fn third_moments_match_symbolic_oracle() {
        let a0 = RMatrix::from_row_slice(2, 2, &[0.3, -1.1, 0.9, -0.4]);
        let basis = MomentBasis::new(2, 3);
        let got = gamma_of(&a0, &basis);
        let oracle = gamma_symbolic(&a0, &basis);
        assert_eq!(got, oracle);
    }

    #[test]
    fn builder_is_linear_in_matrix_argument() {
        // dyadic entries keep every product and sum exact in f64
        let a = RMatrix::from_row_slice(2, 2, &[0.5, -2.0, 1.25, 3.0]);
        let b = RMatrix::from_row_slice(2, 2, &[-1.5, 0.75, 2.0, -0.25]);
        let basis = MomentBasis::new(2, 3);
        let lhs = gamma_of(&(&a + &b), &basis);
        let rhs = gamma_of(&a, &basis) + gamma_of(&b, &basis);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn mathieu_eigenvalues_second_moment() {
        let (omega0, gamma) = (0.5, 0.01);
        let sys = SystemSpec::mathieu(omega0, gamma, 2, 0.0).unwrap();
        let eig = eig_gamma(&build_gamma(&sys)).unwrap();
        let omega = (4.0 * omega0 * omega0 - gamma * gamma).sqrt();
        let expect = [
            Complex64::new(-gamma, 0.0),
            Complex64::new(-gamma, omega),
            Complex64::new(-gamma, -omega),
        ];
        let mut remaining = eig.values.clone();
        for e in expect {
            let (pos, dist) = remaining
                .iter()
                .enumerate()
                .map(|(i, g)| (i, (g - e).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assert!(dist < 1e-10, "unmatched {e}");
            remaining.remove(pos);
        }
        assert_eq!(eig.dominant.len(), 3);
    }

    #[test]
    fn mathieu_eigenvalues_first_moment() {
        let (omega0, gamma) = (0.5, 0.01);
        let sys = SystemSpec::mathieu(omega0, gamma, 1, 0.0).unwrap();
        let eig = eig_gamma(&build_gamma(&sys)).unwrap();
        let omega = (4.0 * omega0 * omega0 - gamma * gamma).sqrt();
        for v in &eig.values {
            assert!((v.re + gamma / 2.0).abs() < 1e-12);
            assert!((v.im.abs() - omega / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_dominant_branch() {
        let sys = SystemSpec::new(
            RMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]),
            RMatrix::zeros(2, 2),
            1,
            0.0,
        )
        .unwrap();
        let eig = eig_gamma(&build_gamma(&sys)).unwrap();
        assert_eq!(eig.dominant, vec![0]);
        assert!((eig.values[0] - Complex64::new(3.0, 0.0)).norm() < 1e-12);
        assert!((eig.phi[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(
            (eig.psi.column(0).dotc(&eig.phi.column(0)) - Complex64::new(1.0, 0.0)).norm() < 1e-12
        );
    }

    #[test]
    fn second_moment_spectrum_is_pairwise_sums() {
        let a0 = RMatrix::from_row_slice(2, 2, &[-0.2, 1.3, -0.8, -0.5]);
        let sys = SystemSpec::new(a0.clone(), RMatrix::zeros(2, 2), 2, 0.0).unwrap();
        let eig = eig_gamma(&build_gamma(&sys)).unwrap();
        let sigma = eig_dense_real(&a0).unwrap().values;
        let mut sums = Vec::new();
        for l in 0..2 {
            for m in l..2 {
                sums.push(sigma[l] + sigma[m]);
            }
        }
        // greedy closest-pair matching of the two multisets
        let mut remaining = eig.values.clone();
        for e in &sums {
            let (pos, dist) = remaining
                .iter()
                .enumerate()
                .map(|(i, g)| (i, (g - e).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assert!(dist < 1e-8, "unmatched {e}");
            remaining.remove(pos);
        }
    }

    #[test]
    fn defective_gamma_rejected() {
        // A0 = [[0,1],[0,0]] is a Jordan block; so is its first-moment generator
        let sys = SystemSpec::new(
            RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            RMatrix::zeros(2, 2),
            1,
            0.0,
        )
        .unwrap();
        assert!(eig_gamma(&build_gamma(&sys)).is_err());
    }
}
