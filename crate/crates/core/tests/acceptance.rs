//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Reference configuration: mu1 = 1.8, mu2 = 0.9, beta = 1, gamma = 0.01,
//! omega0 = 0.5, a = (1, 0.9), truncation (N_m, N_h) = (7, 5), p = 2.

mod common;

use common::{
    assert_multiset_close, random_passing_filter, random_system, rng, table1_filter, table1_system,
};
use num_complex::Complex64;
use oustab::filter::{covariance_from_modes, filter_modes, stationary_covariance};
use oustab::ladder::{build_ad, ladder_eigensystem};
use oustab::moments::{build_gamma, eig_gamma};
use oustab::montecarlo::{empirical_psd, growth_rate, simulate, SimConfig};
use oustab::numerics::{eig_dense_real, lyapunov_solve, RMatrix, RVector};
use oustab::perturbation::{mathieu_closed_form, Perturbation};
use oustab::spectral::Spectrum;
use oustab::truncation::{
    assemble_l, critical_epsilon, solve_at, spectrum as l_spectrum, Filter2Spec, TruncationConfig,
};
use oustab::FilterSpec;
use std::time::Instant;

const TABLE_LAMBDA: [(f64, f64); 3] = [(0.01, -9.89e-3), (0.05, -7.20e-3), (0.10, 1.65e-3)];
const TABLE_E2: [(f64, f64); 3] = [(0.01, 5.74e-8), (0.05, 3.62e-5), (0.10, 5.96e-4)];

fn table1_truncation() -> (oustab::MomentOperator, Filter2Spec, TruncationConfig) {
    let op = build_gamma(&table1_system(2, 0.0));
    let f2 = Filter2Spec::new(1.8, 0.9, 1.0, 1.0, 0.9).unwrap();
    let cfg = TruncationConfig::new(7, 5).unwrap();
    (op, f2, cfg)
}

/// Our pipeline's lambda2 on the real dominant branch of the reference
/// configuration.
fn table1_lambda2() -> f64 {
    let pert = Perturbation::new(&table1_system(2, 0.0), &table1_filter()).unwrap();
    let branch = pert.branch_near(Complex64::new(-0.01, 0.0)).unwrap();
    pert.lambda2_spectral(branch).unwrap().re
}

#[test]
fn criterion_01_table1_reproduction() {
    let start = Instant::now();
    let (op, f2, cfg) = table1_truncation();
    for (eps, expect) in TABLE_LAMBDA {
        let lambda = solve_at(&op, &f2, &cfg, eps).unwrap();
        let rel = (lambda.re - expect).abs() / expect.abs();
        assert!(
            rel <= 0.01,
            "eps = {eps}: {} vs {expect} (rel {rel:.2e})",
            lambda.re
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("[acceptance] criterion 1 (reference growth rates at eps = 0.01/0.05/0.10, 1% rel): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_02_second_order_error_reproduction() {
    let start = Instant::now();
    let (op, f2, cfg) = table1_truncation();
    let lambda0 = -0.01;
    let lambda2 = table1_lambda2();
    assert!((lambda2 - 1.105).abs() < 1e-3);
    for (eps, expect) in TABLE_E2 {
        let lambda = solve_at(&op, &f2, &cfg, eps).unwrap().re;
        let e2 = (lambda0 + lambda2 * eps * eps - lambda).abs();
        let rel = (e2 - expect).abs() / expect;
        assert!(
            rel <= 0.05,
            "eps = {eps}: E2 = {e2:.4e} vs {expect:.3e} (rel {rel:.2e})"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("[acceptance] criterion 2 (second-order error column, 5% rel): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_03_quartic_error_scaling() {
    let (op, f2, cfg) = table1_truncation();
    let lambda0 = -0.01;
    let lambda2 = table1_lambda2();
    let ratio_at = |eps: f64| {
        let lambda = solve_at(&op, &f2, &cfg, eps).unwrap().re;
        (lambda0 + lambda2 * eps * eps - lambda).abs() / eps.powi(4)
    };
    let r_small = ratio_at(0.01);
    let r_large = ratio_at(0.05);
    let rel = (r_small - r_large).abs() / (0.5 * (r_small + r_large));
    assert!(
        rel <= 0.05,
        "residual/eps^4: {r_small:.4} at 0.01 vs {r_large:.4} at 0.05 (rel {rel:.2e})"
    );
    println!(
        "[acceptance] criterion 3 (residual scales as eps^4: {r_small:.3} vs {r_large:.3}): PASS"
    );
}

#[test]
fn criterion_04_example_psd_closed_form() {
    // acceleration-like two-dimensional filter with S(0) = S'(0) = 0
    let (mu1, mu2, sigma, beta) = (1.3, 0.7, 2.0, 0.9);
    let spec = FilterSpec::new(
        RMatrix::from_row_slice(2, 2, &[-mu1, 0.0, beta, -mu2]),
        RMatrix::from_row_slice(2, 2, &[sigma, 0.0, 0.0, 0.0]),
        RVector::from_vec(vec![beta, -mu2]),
    )
    .unwrap();
    let s = Spectrum::new(&spec).unwrap();
    let rows = s.psd_grid(0.0, 6.0, 100).unwrap();
    assert_eq!(rows.len(), 100);
    for &(omega, got) in &rows {
        let w2 = omega * omega;
        let closed = sigma * beta * beta * w2 / ((w2 + mu1 * mu1) * (w2 + mu2 * mu2));
        if closed == 0.0 {
            assert!(got.abs() <= 1e-14, "S(0) = {got:.3e}");
        } else {
            assert!(
                (got - closed).abs() <= 1e-10 * closed,
                "omega = {omega}: {got} vs {closed}"
            );
        }
    }
    // numeric flatness at the origin: central difference vanishes by
    // symmetry; the one-sided slope is O(h) from the quadratic behavior,
    // so it must shrink linearly as h does
    let h = 1e-4;
    let central = (s.psd(h).unwrap() - s.psd(-h).unwrap()) / (2.0 * h);
    assert!(central.abs() < 1e-12);
    let slope = |h: f64| (s.psd(h).unwrap() - s.psd(0.0).unwrap()) / h;
    assert!(slope(h).abs() < 1e-3);
    assert!(slope(h).abs() < 0.15 * slope(10.0 * h).abs());
    println!(
        "[acceptance] criterion 4 (closed-form PSD on 100-point grid, S(0) = S'(0) = 0): PASS"
    );
}

#[test]
fn criterion_05_three_route_lambda2_equivalence() {
    let start = Instant::now();
    let mut rng = rng(0x5EED_0005);
    let mut checked = 0;
    for i in 0..50 {
        let n_filter = 1 + (i % 2);
        let filter = random_passing_filter(&mut rng, n_filter);
        let sys = random_system(&mut rng, 2, 2, 0.1);
        let pert = Perturbation::new(&sys, &filter).unwrap();
        let branch = pert.moment_eigen().dominant[0];
        let nu1 = pert.moment_eigen().values[branch];
        assert!(pert.branch_valid(branch), "dominant branch must be valid");

        let spectral = pert.lambda2_spectral(branch).unwrap();
        let direct = pert.lambda2_direct(branch).unwrap();

        // locate the A0 eigenvalue pair summing to this branch
        let sigma = eig_dense_real(sys.a0()).unwrap().values;
        let mut best = (0, 0, f64::INFINITY);
        for q in 0..2 {
            for r in q..2 {
                let d = (sigma[q] + sigma[r] - nu1).norm();
                if d < best.2 {
                    best = (q, r, d);
                }
            }
        }
        assert!(best.2 < 1e-8 * (1.0 + nu1.norm()), "no matching pair");
        let (_, tensor) = pert.lambda2_tensor(best.0, best.1).unwrap();

        let scale = 1.0 + spectral.norm();
        assert!(
            (spectral - direct).norm() <= 1e-8 * scale,
            "instance {i}: spectral {spectral} vs direct {direct}"
        );
        assert!(
            (spectral - tensor).norm() <= 1e-8 * scale,
            "instance {i}: spectral {spectral} vs tensor {tensor}"
        );
        assert!(
            (direct - tensor).norm() <= 1e-8 * scale,
            "instance {i}: direct {direct} vs tensor {tensor}"
        );
        checked += 1;
    }
    let elapsed = start.elapsed();
    assert_eq!(checked, 50);
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("[acceptance] criterion 5 (three lambda2 routes agree on 50 random instances, 1e-8): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_06_closed_form_moment_ordering() {
    let filter = table1_filter();
    let spectrum = Spectrum::new(&filter).unwrap();
    let omega = 0.9999f64.sqrt();

    // the closed-form branch per moment order
    let branch_target = [
        (1, Complex64::new(-0.005, omega / 2.0)),
        (2, Complex64::new(-0.01, 0.0)),
        (3, Complex64::new(-0.015, omega / 2.0)),
    ];
    let mut lambda2 = [0.0f64; 4];
    let mut lambda0 = [0.0f64; 4];
    for (p, target) in branch_target {
        let (l0_closed, l2_closed) = mathieu_closed_form(0.01, 0.5, &spectrum, p).unwrap();
        let pert = Perturbation::new(&table1_system(p, 0.0), &filter).unwrap();
        let branch = pert.branch_near(target).unwrap();
        let l2 = pert.lambda2_spectral(branch).unwrap();
        assert!(
            (l2.re - l2_closed).abs() <= 1e-10,
            "p = {p}: pipeline {} vs closed {l2_closed}",
            l2.re
        );
        assert!((pert.moment_eigen().values[branch].re - l0_closed).abs() <= 1e-10);
        lambda2[p] = l2_closed;
        lambda0[p] = l0_closed;
    }

    // the reference filter has S(0) > S(Omega), so the second moment
    // destabilizes first, then the third; the first moments only stabilize
    let s0 = spectrum.psd(0.0).unwrap();
    let s_osc = spectrum.psd(omega).unwrap();
    assert!(s0 > s_osc);
    assert!(lambda2[1] < 0.0, "first moments must not destabilize");
    let eps2 = (-lambda0[2] / lambda2[2]).sqrt();
    let eps3 = (-lambda0[3] / lambda2[3]).sqrt();
    assert!(
        eps2 < eps3,
        "second moment must destabilize before third: {eps2} vs {eps3}"
    );
    println!(
        "[acceptance] criterion 6 (closed forms p = 1, 2, 3 at 1e-10; instability order 2 < 3 < 1): PASS"
    );
}

#[test]
fn criterion_07_ladder_identity_suite() {
    let start = Instant::now();
    let mut rng = rng(0x5EED_0007);
    for i in 0..50 {
        let n = 1 + (i % 3);
        let filter = random_passing_filter(&mut rng, n);
        let modes = filter_modes(&filter).unwrap();
        // constructor certifies eigen-residuals (1e-10), commutator
        // identities (1e-10) and the generator decomposition (1e-9)
        let sys = ladder_eigensystem(&filter, &modes).unwrap();

        // T-spectrum multiset = {0} union {+-mu_k} at 1e-8
        let (a, d) = build_ad(&filter);
        let t_eig = eig_dense_real(&(d * a)).unwrap();
        let mut expect = vec![Complex64::new(0.0, 0.0)];
        for mu in &sys.mu {
            expect.push(*mu);
            expect.push(-mu);
        }
        assert_multiset_close(
            &t_eig.values,
            &expect,
            1e-8,
            &format!("instance {i} T spectrum"),
        );

        // stationary covariance: P Q^{-1} route vs Lyapunov route at 1e-8
        let via_modes = covariance_from_modes(&filter, &modes).unwrap();
        let via_lyapunov = lyapunov_solve(filter.h(), filter.b()).unwrap();
        let scale = via_lyapunov.norm().max(1e-300);
        assert!(
            (via_modes - &via_lyapunov).norm() <= 1e-8 * scale,
            "instance {i}: covariance routes disagree"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("[acceptance] criterion 7 (ladder identities on 50 random filters, n <= 3): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_08_zero_amplitude_spectrum_lattice() {
    let (op, f2, cfg) = table1_truncation();
    let l = assemble_l(&op, &f2, &cfg, 0.0);
    let got = l_spectrum(&l).unwrap();
    let nu = eig_gamma(&op).unwrap().values;
    let mut expect = Vec::with_capacity(got.len());
    for j in 0..=cfg.n_m {
        for k in 0..=cfg.n_h {
            for v in &nu {
                expect.push(v - Complex64::new(k as f64 * f2.mu1() + j as f64 * f2.mu2(), 0.0));
            }
        }
    }
    assert_multiset_close(&got, &expect, 1e-8, "zero-amplitude lattice");
    println!("[acceptance] criterion 8 (eps = 0 spectrum = shifted decay lattice, 1e-8): PASS");
}

#[test]
fn criterion_09_monte_carlo_concordance() {
    let start = Instant::now();
    let filter = table1_filter();
    let (op, f2, cfg_tr) = table1_truncation();

    let base = SimConfig {
        dt: 1e-3,
        t_final: 200.0,
        paths: 10_000,
        seed: 0x5EED_0009,
        burn_in: 0.1,
        x0: None,
        n_samples: 512,
    };

    for eps in [0.01, 0.10] {
        let lambda = solve_at(&op, &f2, &cfg_tr, eps).unwrap().re;
        let sys = table1_system(2, eps);
        let series = simulate(&filter, &sys, &base).unwrap();
        assert!(series.blow_up.is_none());
        let m = series.basis.index_of(&[2, 0]).unwrap();
        let (times, values) = series.moment_series(m);
        let rate = growth_rate(&times, &values, (20.0, 200.0)).unwrap();
        assert_eq!(
            rate.slope.signum(),
            lambda.signum(),
            "eps = {eps}: slope {} vs lambda {lambda}",
            rate.slope
        );

        if eps == 0.01 {
            // stationary <s s^T> against the analytic covariance, 3 s.e.
            let cov = stationary_covariance(&filter).unwrap().covariance;
            let got = series.s_outer.last().unwrap();
            let se = series.s_outer_stderr.last().unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    let diff = (got[(r, c)] - cov[(r, c)]).abs();
                    assert!(
                        diff <= 3.0 * se[(r, c)] + 1e-4,
                        "cov[{r}{c}]: {} vs {} (se {})",
                        got[(r, c)],
                        cov[(r, c)],
                        se[(r, c)]
                    );
                }
            }
        }
    }

    // empirical PSD vs analytic on the mid-band; the Welch average needs
    // segments, not ensemble size, so fewer paths suffice here
    let spectrum = Spectrum::new(&filter).unwrap();
    let psd_cfg = SimConfig {
        paths: 128,
        ..base.clone()
    };
    let rows = empirical_psd(&filter, &psd_cfg, 32_768).unwrap();
    let mut checked = 0;
    for &(omega, est) in &rows {
        if !(0.5..=2.0).contains(&omega) {
            continue;
        }
        let analytic = spectrum.psd(omega).unwrap();
        assert!(
            (est - analytic).abs() <= 0.10 * analytic,
            "omega = {omega}: {est} vs {analytic}"
        );
        checked += 1;
    }
    assert!(checked >= 5);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!("[acceptance] criterion 9 (ensemble signs, stationary covariance, mid-band PSD): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_10_critical_amplitude() {
    let (op, f2, cfg) = table1_truncation();
    let crit = critical_epsilon(&op, &f2, &cfg, (0.05, 0.10)).unwrap();
    assert!(crit.eps_star > 0.05 && crit.eps_star < 0.10);
    let perturbative = (0.01f64 / table1_lambda2()).sqrt();
    assert!((perturbative - 0.095).abs() < 1e-3);
    let rel = (crit.eps_star - perturbative).abs() / perturbative;
    assert!(
        rel <= 0.10,
        "eps* = {} vs perturbative {perturbative} (rel {rel:.2e})",
        crit.eps_star
    );
    println!(
        "[acceptance] criterion 10 (critical amplitude {:.4} within 10% of sqrt(gamma/lambda2) = {perturbative:.4}): PASS",
        crit.eps_star
    );
}
