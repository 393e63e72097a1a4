//! Ensemble Euler-Maruyama oracle for the coupled filter + system SDE.
//!
//! Paths integrate `s <- s + H s dt + C sqrt(dt) xi`,
//! `x <- x + (A0 + eps <a, s> A1) x dt` with `s(0) = 0` and deterministic
//! `x(0)`. The noise is additive in `s` and `x` carries no noise of its
//! own, so plain Euler-Maruyama at the guarded step size is adequate.
//!
//! Determinism: each path draws from its own counter-derived ChaCha
//! substream, and accumulation runs over fixed-size path chunks merged in
//! chunk order — results are bitwise identical for a given seed no matter
//! how many threads rayon uses.

use crate::filter::{self, FilterSpec};
use crate::moments::{MomentBasis, SystemSpec};
use crate::numerics::{RMatrix, RVector};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;

const PATH_CHUNK: usize = 64;
const OVERFLOW_LIMIT: f64 = 1e100;

/// Ensemble simulation parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub paths: usize,
    /// Master seed; per-path substreams are derived from it.
    pub seed: u64,
    /// Fraction of the horizon treated as transient, in `[0, 1)`.
    pub burn_in: f64,
    /// Deterministic initial state of `x`; defaults to `(1, 0, ..., 0)`.
    pub x0: Option<RVector>,
    /// Number of points on the output time grid.
    pub n_samples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 100.0,
            paths: 1000,
            seed: 1,
            burn_in: 0.1,
            x0: None,
            n_samples: 512,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final > self.dt) {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must exceed dt {}",
                self.t_final, self.dt
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidArgument("need at least one path".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidArgument(format!(
                "burn-in fraction must be in [0, 1), got {}",
                self.burn_in
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        Ok(())
    }

    fn rng_for_path(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64 + 1);
        rng
    }
}

/// Ensemble moment trajectories on the sample grid.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub basis: MomentBasis,
    /// `moments[i][m]` = ensemble mean of the m-th monomial at `times[i]`.
    pub moments: Vec<Vec<f64>>,
    /// Standard errors matching `moments`.
    pub stderrs: Vec<Vec<f64>>,
    /// Ensemble mean of `s s^T` at each sample time.
    pub s_outer: Vec<RMatrix>,
    /// Standard errors per entry of `s s^T`.
    pub s_outer_stderr: Vec<RMatrix>,
    /// Time of the first overflow, when any path blew up; the series is
    /// truncated just before it.
    pub blow_up: Option<f64>,
    /// Step-size guard message, when `dt` looked too coarse.
    pub stability_warning: Option<String>,
}

impl MomentSeries {
    /// Column of one monomial moment over time.
    pub fn moment_series(&self, m: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.times.clone(),
            self.moments.iter().map(|row| row[m]).collect(),
        )
    }
}

/// Rank-revealing symmetric factorization `C C^T = B`; rank-deficient `B`
/// yields fewer columns.
pub fn factor_noise(b: &RMatrix) -> Result<RMatrix> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::NotSquare {
            rows: b.nrows(),
            cols: b.ncols(),
        });
    }
    let scale = b.norm().max(1e-300);
    if (b - b.transpose()).norm() > 1e-12 * scale {
        return Err(Error::InvalidArgument(
            "noise weight must be symmetric".into(),
        ));
    }
    let eig = nalgebra::SymmetricEigen::new(0.5 * (b + b.transpose()));
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-12 * scale {
        return Err(Error::NotPositiveSemiDefinite { min_eig });
    }
    // keep eigenpairs above the PSD noise floor, largest first
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * scale)
        .collect();
    let mut c = RMatrix::zeros(n, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned() * eig.eigenvalues[i].sqrt();
        // fix the sign so the largest-magnitude entry is positive
        let lead = v
            .iter()
            .cloned()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v = -v;
        }
        c.set_column(col, &v);
    }
    Ok(c)
}

struct ChunkAccumulator {
    /// [sample][monomial] sums over paths
    sums: Vec<Vec<f64>>,
    sumsq: Vec<Vec<f64>>,
    /// [sample] n x n sums of s s^T
    s_outer: Vec<RMatrix>,
    s_outer_sq: Vec<RMatrix>,
    /// first sample index at which any path overflowed
    overflow_sample: usize,
}

impl ChunkAccumulator {
    fn new(n_samples: usize, j_dim: usize, n: usize) -> Self {
        Self {
            sums: vec![vec![0.0; j_dim]; n_samples],
            sumsq: vec![vec![0.0; j_dim]; n_samples],
            s_outer: vec![RMatrix::zeros(n, n); n_samples],
            s_outer_sq: vec![RMatrix::zeros(n, n); n_samples],
            overflow_sample: usize::MAX,
        }
    }

    fn merge(&mut self, other: &ChunkAccumulator) {
        for i in 0..self.sums.len() {
            for m in 0..self.sums[i].len() {
                self.sums[i][m] += other.sums[i][m];
                self.sumsq[i][m] += other.sumsq[i][m];
            }
            self.s_outer[i] += &other.s_outer[i];
            self.s_outer_sq[i] += &other.s_outer_sq[i];
        }
        self.overflow_sample = self.overflow_sample.min(other.overflow_sample);
    }
}

/// Integrate the coupled SDE over an ensemble and accumulate the degree-p
/// monomial moments of `x` and the second moments of `s`.
pub fn simulate(spec: &FilterSpec, sys: &SystemSpec, cfg: &SimConfig) -> Result<MomentSeries> {
    cfg.validate()?;
    let report = filter::validate_basic_conditions(spec);
    if let Some(fail) = report.first_failure() {
        return Err(Error::BasicConditions(format!(
            "{}: {}",
            fail.name, fail.detail
        )));
    }
    let n = spec.dim();
    let n_sys = sys.dim();
    let c = factor_noise(spec.b())?;
    let basis = MomentBasis::new(n_sys, sys.p());
    let x0 = match &cfg.x0 {
        Some(v) => {
            if v.len() != n_sys {
                return Err(Error::DimensionMismatch {
                    context: format!("x0 has length {}, system dimension is {n_sys}", v.len()),
                });
            }
            v.clone()
        }
        None => {
            let mut v = RVector::zeros(n_sys);
            v[0] = 1.0;
            v
        }
    };

    let stability_warning = step_size_guard(spec, sys, cfg)?;

    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let stride = (steps / cfg.n_samples).max(1);
    let sample_steps: Vec<usize> = (0..=steps).step_by(stride).collect();
    let n_samples = sample_steps.len();
    let times: Vec<f64> = sample_steps.iter().map(|&k| k as f64 * cfg.dt).collect();

    let n_chunks = cfg.paths.div_ceil(PATH_CHUNK);
    let chunk_results: Vec<ChunkAccumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * PATH_CHUNK;
            let hi = ((chunk + 1) * PATH_CHUNK).min(cfg.paths);
            let mut acc = ChunkAccumulator::new(n_samples, basis.len(), n);
            for path in lo..hi {
                run_path(
                    spec,
                    sys,
                    cfg,
                    &c,
                    &basis,
                    &x0,
                    &sample_steps,
                    path,
                    &mut acc,
                );
            }
            acc
        })
        .collect();

    let mut total = ChunkAccumulator::new(n_samples, basis.len(), n);
    for acc in &chunk_results {
        total.merge(acc);
    }

    let keep = total.overflow_sample.min(n_samples);
    let blow_up = (keep < n_samples).then(|| times[keep]);
    let paths_f = cfg.paths as f64;
    let mut moments = Vec::with_capacity(keep);
    let mut stderrs = Vec::with_capacity(keep);
    let mut s_outer = Vec::with_capacity(keep);
    let mut s_outer_stderr = Vec::with_capacity(keep);
    for i in 0..keep {
        let mean: Vec<f64> = total.sums[i].iter().map(|s| s / paths_f).collect();
        let se: Vec<f64> = total.sumsq[i]
            .iter()
            .zip(mean.iter())
            .map(|(sq, m)| ((sq / paths_f - m * m).max(0.0) / paths_f).sqrt())
            .collect();
        moments.push(mean);
        stderrs.push(se);
        let mean_outer = &total.s_outer[i] / paths_f;
        let var_outer = RMatrix::from_fn(n, n, |r, q| {
            let m = mean_outer[(r, q)];
            ((total.s_outer_sq[i][(r, q)] / paths_f - m * m).max(0.0) / paths_f).sqrt()
        });
        s_outer.push(mean_outer);
        s_outer_stderr.push(var_outer);
    }

    Ok(MomentSeries {
        times: times[..keep].to_vec(),
        basis,
        moments,
        stderrs,
        s_outer,
        s_outer_stderr,
        blow_up,
        stability_warning,
    })
}

fn step_size_guard(spec: &FilterSpec, sys: &SystemSpec, cfg: &SimConfig) -> Result<Option<String>> {
    let modes = filter::filter_modes(spec)?;
    let mu_max = modes.mu.iter().map(|m| m.norm()).fold(0.0f64, f64::max);
    let cov = filter::stationary_covariance(spec)?.covariance;
    let f_var = (spec.a().transpose() * &cov * spec.a())[(0, 0)];
    let forcing_scale = 3.0 * f_var.max(0.0).sqrt();
    let rate = mu_max.max(sys.a0().norm() + sys.epsilon() * sys.a1().norm() * forcing_scale);
    if cfg.dt * rate > 0.1 {
        return Ok(Some(format!(
            "dt * max rate = {:.3e} exceeds 0.1; decrease dt below {:.3e}",
            cfg.dt * rate,
            0.1 / rate
        )));
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    spec: &FilterSpec,
    sys: &SystemSpec,
    cfg: &SimConfig,
    c: &RMatrix,
    basis: &MomentBasis,
    x0: &RVector,
    sample_steps: &[usize],
    path: usize,
    acc: &mut ChunkAccumulator,
) {
    let n = spec.dim();
    let n_sys = sys.dim();
    let n_noise = c.ncols();
    let eps = sys.epsilon();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let steps = *sample_steps.last().unwrap();

    // flat row-major copies; the step loop runs billions of times, so no
    // allocations, matrix temporaries or strided reads in here
    let row_major = |m: &RMatrix| -> Vec<f64> {
        let (r, c) = m.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(m[(i, j)]);
            }
        }
        out
    };
    let h_rows = row_major(spec.h());
    let a0_rows = row_major(sys.a0());
    let a1_rows = row_major(sys.a1());
    let c_cols = c.as_slice(); // column-major: noise columns contiguous
    let a_vec = spec.a().as_slice();

    let mut rng = cfg.rng_for_path(path);

    // fully unrolled kernel for the common 2-dim filter / 2-dim system /
    // rank-one noise shape; keeps every state component in a register
    if n == 2 && n_sys == 2 && n_noise == 1 {
        let (h00, h01, h10, h11) = (h_rows[0], h_rows[1], h_rows[2], h_rows[3]);
        let (p00, p01, p10, p11) = (a0_rows[0], a0_rows[1], a0_rows[2], a0_rows[3]);
        let (q00, q01, q10, q11) = (a1_rows[0], a1_rows[1], a1_rows[2], a1_rows[3]);
        let (c0, c1) = (c_cols[0], c_cols[1]);
        let (av0, av1) = (a_vec[0], a_vec[1]);
        let (mut s0, mut s1) = (0.0f64, 0.0f64);
        let (mut x0v, mut x1v) = (x0[0], x0[1]);
        let dt_eps = dt * eps;

        let mut next_sample = 0usize;
        let mut alive = true;
        for step in 0..=steps {
            if next_sample < sample_steps.len() && step == sample_steps[next_sample] {
                if alive
                    && !(x0v.is_finite()
                        && x1v.is_finite()
                        && x0v.abs() <= OVERFLOW_LIMIT
                        && x1v.abs() <= OVERFLOW_LIMIT)
                {
                    alive = false;
                    acc.overflow_sample = acc.overflow_sample.min(next_sample);
                }
                if alive {
                    record_sample(acc, next_sample, basis, &[x0v, x1v], &[s0, s1]);
                }
                next_sample += 1;
            }
            if step == steps {
                break;
            }
            let coeff = dt_eps * (av0 * s0 + av1 * s1);
            let dx0 = (dt * p00 + coeff * q00) * x0v + (dt * p01 + coeff * q01) * x1v;
            let dx1 = (dt * p10 + coeff * q10) * x0v + (dt * p11 + coeff * q11) * x1v;
            let xi: f64 = StandardNormal.sample(&mut rng);
            let scaled = sqrt_dt * xi;
            let ds0 = dt * (h00 * s0 + h01 * s1) + c0 * scaled;
            let ds1 = dt * (h10 * s0 + h11 * s1) + c1 * scaled;
            x0v += dx0;
            x1v += dx1;
            s0 += ds0;
            s1 += ds1;
        }
        return;
    }

    let mut s = vec![0.0f64; n];
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut dx = vec![0.0f64; n_sys];
    let mut ds = vec![0.0f64; n];

    let mut next_sample = 0usize;
    let mut alive = true;
    for step in 0..=steps {
        if next_sample < sample_steps.len() && step == sample_steps[next_sample] {
            if alive && x.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
                alive = false;
                acc.overflow_sample = acc.overflow_sample.min(next_sample);
            }
            if alive {
                record_sample(acc, next_sample, basis, &x, &s);
            }
            next_sample += 1;
        }
        if step == steps {
            break;
        }
        // joint Euler step from time-t values
        let mut f = 0.0;
        for (av, sv) in a_vec.iter().zip(s.iter()) {
            f += av * sv;
        }
        let coeff = dt * eps * f;
        for (i, slot) in dx.iter_mut().enumerate() {
            let row0 = &a0_rows[i * n_sys..(i + 1) * n_sys];
            let row1 = &a1_rows[i * n_sys..(i + 1) * n_sys];
            let mut sum = 0.0;
            for ((m0, m1), xv) in row0.iter().zip(row1.iter()).zip(x.iter()) {
                sum += (dt * m0 + coeff * m1) * xv;
            }
            *slot = sum;
        }
        for (i, slot) in ds.iter_mut().enumerate() {
            let row = &h_rows[i * n..(i + 1) * n];
            let mut sum = 0.0;
            for (hv, sv) in row.iter().zip(s.iter()) {
                sum += hv * sv;
            }
            *slot = dt * sum;
        }
        for j in 0..n_noise {
            let xi: f64 = StandardNormal.sample(&mut rng);
            let scaled = sqrt_dt * xi;
            let col = &c_cols[j * n..(j + 1) * n];
            for (slot, cv) in ds.iter_mut().zip(col.iter()) {
                *slot += cv * scaled;
            }
        }
        for (xv, d) in x.iter_mut().zip(dx.iter()) {
            *xv += d;
        }
        for (sv, d) in s.iter_mut().zip(ds.iter()) {
            *sv += d;
        }
    }
}

fn record_sample(
    acc: &mut ChunkAccumulator,
    sample: usize,
    basis: &MomentBasis,
    x: &[f64],
    s: &[f64],
) {
    for (m, alpha) in basis.iter().enumerate() {
        let mut value = 1.0;
        for (i, &e) in alpha.iter().enumerate() {
            value *= x[i].powi(e as i32);
        }
        acc.sums[sample][m] += value;
        acc.sumsq[sample][m] += value * value;
    }
    let n = s.len();
    for r in 0..n {
        for q in 0..n {
            let v = s[r] * s[q];
            acc.s_outer[sample][(r, q)] += v;
            acc.s_outer_sq[sample][(r, q)] += v * v;
        }
    }
}

/// Least-squares growth-rate estimate.
#[derive(Debug, Clone)]
pub struct GrowthRate {
    pub slope: f64,
    pub stderr: f64,
    /// True when the fit used the log of local maxima instead of every point.
    pub used_envelope: bool,
}

/// Fit `log m(t) ~ slope * t` over `window = (t_lo, t_hi)`.
///
/// Oscillatory or sign-changing series fall back to fitting the log of the
/// local maxima of `|m|` (the envelope).
pub fn growth_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<GrowthRate> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "times and values lengths differ".into(),
        });
    }
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= window.0 && times[i] <= window.1 && values[i].is_finite())
        .collect();
    if idx.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "window [{}, {}] holds {} usable points; need >= 8",
            window.0,
            window.1,
            idx.len()
        )));
    }
    let vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let ts: Vec<f64> = idx.iter().map(|&i| times[i]).collect();

    let any_nonpositive = vals.iter().any(|&v| v <= 0.0);
    let oscillatory = {
        let maxima = local_maxima(&ts, &vals);
        let vmax = vals.iter().cloned().fold(f64::MIN, f64::max);
        let vmin = vals.iter().cloned().fold(f64::MAX, f64::min);
        maxima.len() >= 3 && vmin > 0.0 && vmax / vmin > 5.0
    };

    if any_nonpositive || oscillatory {
        let abs_vals: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
        let peaks = local_maxima(&ts, &abs_vals);
        if peaks.len() < 3 {
            return Err(Error::InvalidArgument(
                "envelope fit needs at least 3 local maxima in the window".into(),
            ));
        }
        let (t_p, v_p): (Vec<f64>, Vec<f64>) = peaks.into_iter().unzip();
        let logs: Vec<f64> = v_p.iter().map(|v| v.ln()).collect();
        let (slope, stderr) = least_squares_slope(&t_p, &logs);
        return Ok(GrowthRate {
            slope,
            stderr,
            used_envelope: true,
        });
    }

    let logs: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let (slope, stderr) = least_squares_slope(&ts, &logs);
    Ok(GrowthRate {
        slope,
        stderr,
        used_envelope: false,
    })
}

fn local_maxima(ts: &[f64], vals: &[f64]) -> Vec<(f64, f64)> {
    let mut peaks = Vec::new();
    for i in 1..vals.len().saturating_sub(1) {
        if vals[i] > 0.0 && vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] {
            peaks.push((ts[i], vals[i]));
        }
    }
    peaks
}

fn least_squares_slope(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, y) in ts.iter().zip(ys.iter()) {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let mut ss_res = 0.0;
    for (t, y) in ts.iter().zip(ys.iter()) {
        let r = y - (intercept + slope * t);
        ss_res += r * r;
    }
    let dof = (ts.len() as f64 - 2.0).max(1.0);
    let stderr = (ss_res / dof / sxx).sqrt();
    (slope, stderr)
}

/// Welch-averaged periodogram of the readout `<a, s(t)>`.
///
/// Simulates `cfg.paths` filter paths, drops the burn-in, splits each
/// record into Hann-windowed segments of `segment_len` samples with 50%
/// overlap, and averages `dt |FFT|^2 / sum w^2` over all segments. The
/// returned grid is `omega_k = 2 pi k / (segment_len dt)`,
/// `k = 0..=segment_len/2`, matching the two-sided density convention
/// `S(omega) = int R(tau) e^{-i omega tau} dtau`.
pub fn empirical_psd(
    spec: &FilterSpec,
    cfg: &SimConfig,
    segment_len: usize,
) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if !segment_len.is_power_of_two() || segment_len < 8 {
        return Err(Error::InvalidArgument(format!(
            "segment length must be a power of two >= 8, got {segment_len}"
        )));
    }
    let report = filter::validate_basic_conditions(spec);
    if let Some(fail) = report.first_failure() {
        return Err(Error::BasicConditions(format!(
            "{}: {}",
            fail.name, fail.detail
        )));
    }
    let n = spec.dim();
    let c = factor_noise(spec.b())?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let burn_steps = (cfg.burn_in * steps as f64).round() as usize;
    let record_len = steps - burn_steps;
    if record_len < segment_len {
        return Err(Error::InvalidArgument(format!(
            "post-burn-in record ({record_len} samples) shorter than one segment ({segment_len})"
        )));
    }

    let window: Vec<f64> = (0..segment_len)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / segment_len as f64).cos()))
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let hop = segment_len / 2;
    let segments_per_path = (record_len - segment_len) / hop + 1;

    let spectra: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = cfg.rng_for_path(path);
            let mut s = RVector::zeros(n);
            let mut xi = RVector::zeros(c.ncols());
            let mut ds = RVector::zeros(n);
            let sqrt_dt = cfg.dt.sqrt();
            let mut record = Vec::with_capacity(record_len);
            for step in 0..steps {
                if step >= burn_steps {
                    record.push(spec.a().dot(&s));
                }
                for i in 0..c.ncols() {
                    xi[i] = StandardNormal.sample(&mut rng);
                }
                ds.gemv(cfg.dt, spec.h(), &s, 0.0);
                ds.gemv(sqrt_dt, &c, &xi, 1.0);
                s += &ds;
            }
            let mut acc = vec![0.0; segment_len / 2 + 1];
            let mut buf = vec![(0.0, 0.0); segment_len];
            for seg in 0..segments_per_path {
                let start = seg * hop;
                for i in 0..segment_len {
                    buf[i] = (record[start + i] * window[i], 0.0);
                }
                fft_in_place(&mut buf);
                for (k, slot) in acc.iter_mut().enumerate() {
                    let (re, im) = buf[k];
                    *slot += (re * re + im * im) * cfg.dt / window_power;
                }
            }
            acc
        })
        .collect();

    let total_segments = (segments_per_path * cfg.paths) as f64;
    let mut out = Vec::with_capacity(segment_len / 2 + 1);
    for k in 0..=segment_len / 2 {
        let omega = 2.0 * PI * k as f64 / (segment_len as f64 * cfg.dt);
        let mean = spectra.iter().map(|s| s[k]).sum::<f64>() / total_segments;
        out.push((omega, mean));
    }
    Ok(out)
}

/// Lagged covariance of the readout, `E[f(t0) f(t0 + tau)]`, estimated at
/// the post-burn-in anchor with per-path time averaging; the standard
/// error comes from the spread of per-path means.
pub fn lagged_covariance(
    spec: &FilterSpec,
    cfg: &SimConfig,
    taus: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    cfg.validate()?;
    let report = filter::validate_basic_conditions(spec);
    if let Some(fail) = report.first_failure() {
        return Err(Error::BasicConditions(format!(
            "{}: {}",
            fail.name, fail.detail
        )));
    }
    let n = spec.dim();
    let c = factor_noise(spec.b())?;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let burn_steps = (cfg.burn_in * steps as f64).round() as usize;
    let lag_steps: Vec<usize> = taus
        .iter()
        .map(|&t| (t / cfg.dt).round() as usize)
        .collect();
    let max_lag = lag_steps.iter().cloned().max().unwrap_or(0);
    if burn_steps + max_lag + 8 > steps {
        return Err(Error::InvalidArgument(
            "horizon too short for the requested lags".into(),
        ));
    }

    let per_path: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = cfg.rng_for_path(path);
            let mut s = RVector::zeros(n);
            let mut xi = RVector::zeros(c.ncols());
            let mut ds = RVector::zeros(n);
            let sqrt_dt = cfg.dt.sqrt();
            let mut record = Vec::with_capacity(steps - burn_steps);
            for step in 0..steps {
                if step >= burn_steps {
                    record.push(spec.a().dot(&s));
                }
                for i in 0..c.ncols() {
                    xi[i] = StandardNormal.sample(&mut rng);
                }
                ds.gemv(cfg.dt, spec.h(), &s, 0.0);
                ds.gemv(sqrt_dt, &c, &xi, 1.0);
                s += &ds;
            }
            lag_steps
                .iter()
                .map(|&lag| {
                    let count = record.len() - lag;
                    let mut sum = 0.0;
                    for i in 0..count {
                        sum += record[i] * record[i + lag];
                    }
                    sum / count as f64
                })
                .collect()
        })
        .collect();

    let paths_f = cfg.paths as f64;
    let mut out = Vec::with_capacity(taus.len());
    for (j, &tau) in taus.iter().enumerate() {
        let mean = per_path.iter().map(|p| p[j]).sum::<f64>() / paths_f;
        let var = per_path
            .iter()
            .map(|p| (p[j] - mean) * (p[j] - mean))
            .sum::<f64>()
            / paths_f.max(2.0);
        out.push((tau, mean, (var / paths_f).sqrt()));
    }
    Ok(out)
}

/// Radix-2 Cooley-Tukey FFT, decimation in time. Length must be a power
/// of two.
fn fft_in_place(data: &mut [(f64, f64)]) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            data.swap(i, j);
        }
        let mut m = n >> 1;
        while m > 0 && j >= m {
            j -= m;
            m >>= 1;
        }
        j += m;
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let angle = -2.0 * PI / len as f64;
        let (wc, ws) = (angle.cos(), angle.sin());
        let mut start = 0;
        while start < n {
            let (mut wr, mut wi) = (1.0, 0.0);
            for k in 0..half {
                let (ur, ui) = data[start + k];
                let (vr, vi) = data[start + k + half];
                let (tr, ti) = (wr * vr - wi * vi, wr * vi + wi * vr);
                data[start + k] = (ur + tr, ui + ti);
                data[start + k + half] = (ur - tr, ui - ti);
                let (nwr, nwi) = (wr * wc - wi * ws, wr * ws + wi * wc);
                wr = nwr;
                wi = nwi;
            }
            start += len;
        }
        len <<= 1;
    }
}
