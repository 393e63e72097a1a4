//! Seeded generators of random valid problem instances, shared by the
//! integration suites.

#![allow(dead_code)]

use oustab::filter::{validate_basic_conditions, FilterSpec};
use oustab::moments::SystemSpec;
use oustab::numerics::{eig_dense_real, RMatrix, RVector};
use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RMatrix {
    RMatrix::from_fn(rows, cols, |_, _| uniform(rng, -1.0, 1.0))
}

/// A filter passing the basic conditions, with a comfortably simple
/// spectrum so that 1e-8..1e-10 tolerances are meaningful.
pub fn random_passing_filter(rng: &mut ChaCha8Rng, n: usize) -> FilterSpec {
    loop {
        let mut h = random_matrix(rng, n, n);
        let eig = match eig_dense_real(&h) {
            Ok(e) => e,
            Err(_) => continue,
        };
        let max_re = eig.values.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let shift = max_re + uniform(rng, 0.3, 1.0);
        for i in 0..n {
            h[(i, i)] -= shift;
        }
        let rank = rng.random_range(1..=n);
        let g = random_matrix(rng, n, rank);
        let b = &g * g.transpose();
        let mut a = RVector::from_fn(n, |_, _| uniform(rng, -1.0, 1.0));
        if a.norm() < 0.1 {
            a[0] = 1.0;
        }
        let spec = match FilterSpec::new(h, b, a) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if !validate_basic_conditions(&spec).passed() {
            continue;
        }
        // keep the spectrum well separated
        let eig = eig_dense_real(spec.h()).unwrap();
        if eig.min_relative_gap() < 1e-3 {
            continue;
        }
        return spec;
    }
}

/// A system with a well-separated, complete `A0` spectrum.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, p: usize, eps: f64) -> SystemSpec {
    loop {
        let a0 = random_matrix(rng, n, n);
        match eig_dense_real(&a0) {
            Ok(e) if e.min_relative_gap() > 1e-2 && e.defective.is_empty() => {
                let a1 = random_matrix(rng, n, n);
                return SystemSpec::new(a0, a1, p, eps).unwrap();
            }
            _ => continue,
        }
    }
}

/// The worked two-dimensional configuration used throughout:
/// `mu1 = 1.8, mu2 = 0.9, beta = 1, a = (1, 0.9)` with the Mathieu
/// oscillator at `omega0 = 0.5, gamma = 0.01`.
pub fn table1_filter() -> FilterSpec {
    FilterSpec::filter2(1.8, 0.9, 1.0, 1.0, 0.9).unwrap()
}

pub fn table1_system(p: usize, eps: f64) -> SystemSpec {
    SystemSpec::mathieu(0.5, 0.01, p, eps).unwrap()
}

/// Greedy closest-pair multiset comparison.
pub fn assert_multiset_close(
    got: &[num_complex::Complex64],
    expect: &[num_complex::Complex64],
    tol: f64,
    what: &str,
) {
    assert_eq!(got.len(), expect.len(), "{what}: cardinality");
    let mut remaining: Vec<num_complex::Complex64> = got.to_vec();
    for e in expect {
        let (pos, dist) = remaining
            .iter()
            .enumerate()
            .map(|(i, g)| (i, (g - e).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("nonempty");
        assert!(
            dist < tol,
            "{what}: no match for {e} (closest at {dist:.3e})"
        );
        remaining.remove(pos);
    }
}
