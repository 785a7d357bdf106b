//! Monte Carlo second moments of `dz = A z dt + Σ N_k z dw_k`, mean-square
//! decay fitting and the stochastic form of the Gronwall ordering.
//!
//! Paths are simulated with Euler–Maruyama on a uniform grid. Path `j` draws
//! its Brownian increments from a ChaCha8 stream selected by `(seed, j)`, and
//! paths are processed in fixed-size chunks whose partial sums are combined in
//! chunk order, so results are bit-identical for any thread count.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::linalg::{min_sym_eigenvalue, psd_factor, spectral_norm, Mat, Vector};
use crate::lyapunov::kron_stability;
use crate::simulate::{
    fundamental_solution, gronwall_check, integrate_matrix_ode, masked_energy, GronwallReport, OVERFLOW_GUARD,
};
use crate::sysmodel::{BilinearSystem, ControlSignal};

/// Paths per parallel work unit. Fixed so the summation order never depends
/// on the scheduler.
const CHUNK: usize = 128;
/// Excluded-path fraction above which a run is flagged as unstable.
pub const EXCLUSION_WARN_FRACTION: f64 = 0.01;
/// Number of standard errors allowed in the moment tolerance.
pub const STAT_CONST: f64 = 5.0;

/// Sample second moments `M̂(t) = (1/M) Σ z zᵀ` over the retained paths.
#[derive(Clone, Debug)]
pub struct MomentPath {
    pub grid: Vec<f64>,
    pub moments: Vec<Mat>,
    /// Paths requested.
    pub paths: usize,
    /// Sample mean of `‖z‖⁴ = ‖z zᵀ‖_F²`, for standard errors.
    pub mean_norm4: Vec<f64>,
    /// Paths dropped by the divergence guard.
    pub excluded: usize,
    pub seed: u64,
}

impl MomentPath {
    pub fn retained(&self) -> usize {
        self.paths - self.excluded
    }

    /// More than 1% of the paths diverged.
    pub fn unstable_warning(&self) -> bool {
        self.excluded as f64 > EXCLUSION_WARN_FRACTION * self.paths as f64
    }

    /// Sample standard deviation of `z zᵀ` in Frobenius norm at each step.
    pub fn outer_std(&self) -> Vec<f64> {
        self.moments.iter().zip(&self.mean_norm4).map(|(m, q)| (q - m.norm_squared()).max(0.0).sqrt()).collect()
    }

    pub fn traces(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.trace()).collect()
    }

    /// CSV with columns `t,trace,fro_norm,deviation_vs_ode`; the deviation
    /// column is empty without a reference.
    pub fn summary_csv(&self, reference: Option<&[Mat]>) -> String {
        let mut out = format!("# seed={} paths={} excluded={}\nt,trace,fro_norm,deviation_vs_ode\n", self.seed, self.paths, self.excluded);
        for (i, (t, m)) in self.grid.iter().zip(&self.moments).enumerate() {
            let dev = reference.map(|r| fmt_num(relative_deviation(m, &r[i]))).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", fmt_num(*t), fmt_num(m.trace()), fmt_num(m.norm()), dev);
        }
        out
    }
}

fn relative_deviation(m: &Mat, z: &Mat) -> f64 {
    (m - z).norm() / z.norm().max(1.0)
}

fn check_uniform(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(Error::Grid("SDE grid must start at 0 and hold at least two points".into()));
    }
    let h = grid[1] - grid[0];
    if !(h > 0.0) {
        return Err(Error::Grid("SDE grid must be increasing".into()));
    }
    let uniform = grid.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.max(grid[grid.len() - 1]));
    if !uniform {
        return Err(Error::Grid("Euler–Maruyama needs a uniform grid".into()));
    }
    Ok(h)
}

/// Per-path generator: stream `path` of the ChaCha8 key derived from `seed`.
fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Dense row-major copies of the system matrices for the path kernel.
struct Kernel {
    n: usize,
    a: Vec<f64>,
    nk: Vec<Vec<f64>>,
}

impl Kernel {
    fn new(sys: &BilinearSystem) -> Self {
        let row_major = |m: &Mat| m.transpose().as_slice().to_vec();
        Kernel { n: sys.state_dim(), a: row_major(&sys.a), nk: sys.n.iter().map(row_major).collect() }
    }

    /// One Euler–Maruyama path written into `states` (`(steps+1)·n` values);
    /// `false` if it crosses the divergence guard.
    fn path(&self, x0: &[f64], states: &mut [f64], h: f64, rng: &mut ChaCha8Rng) -> bool {
        let n = self.n;
        let sqrt_h = h.sqrt();
        states[..n].copy_from_slice(x0);
        let mut dw = vec![0.0; self.nk.len()];
        for step in 1..states.len() / n {
            let (prev, next) = states.split_at_mut(step * n);
            let z = &prev[(step - 1) * n..];
            let next = &mut next[..n];
            for w in dw.iter_mut() {
                *w = sqrt_h * Distribution::<f64>::sample(&StandardNormal, rng);
            }
            let mut norm_sq = 0.0;
            for i in 0..n {
                let mut acc = z[i] + h * dot(&self.a[i * n..(i + 1) * n], z);
                for (nk, w) in self.nk.iter().zip(&dw) {
                    acc += w * dot(&nk[i * n..(i + 1) * n], z);
                }
                next[i] = acc;
                norm_sq += acc * acc;
            }
            if !(norm_sq.sqrt() <= OVERFLOW_GUARD) {
                return false;
            }
        }
        true
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Initial state of every path.
enum Init<'a> {
    Fixed(&'a [f64]),
    /// `x0 = K ξ` with standard normal `ξ`, giving `E[x0 x0ᵀ] = K Kᵀ`.
    Gaussian(&'a Mat),
}

struct Sums {
    outer: Vec<Mat>,
    norm4: Vec<f64>,
    excluded: usize,
}

/// Sums of `z zᵀ` and `‖z‖⁴` over the retained paths at every step.
fn moment_sums(kernel: &Kernel, init: &Init, steps: usize, h: f64, paths: usize, seed: u64) -> Sums {
    let n = kernel.n;
    // per-chunk sums of z zᵀ, flattened as (step, i, j) row-major
    let chunks: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![0.0; (steps + 1) * n * n];
            let mut norm4 = vec![0.0; steps + 1];
            let mut states = vec![0.0; (steps + 1) * n];
            let mut x0 = vec![0.0; n];
            let mut excluded = 0;
            for j in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                let mut rng = path_rng(seed, j);
                match init {
                    Init::Fixed(x) => x0.copy_from_slice(x),
                    Init::Gaussian(k) => {
                        let xi: Vec<f64> = (0..k.ncols()).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
                        for (i, x) in x0.iter_mut().enumerate() {
                            *x = (0..k.ncols()).map(|l| k[(i, l)] * xi[l]).sum();
                        }
                    }
                }
                if !kernel.path(&x0, &mut states, h, &mut rng) {
                    excluded += 1;
                    continue;
                }
                for ((s, q), z) in sums.chunks_exact_mut(n * n).zip(norm4.iter_mut()).zip(states.chunks_exact(n)) {
                    *q += dot(z, z).powi(2);
                    for (i, zi) in z.iter().enumerate() {
                        for (sij, zj) in s[i * n..(i + 1) * n].iter_mut().zip(z) {
                            *sij += zi * zj;
                        }
                    }
                }
            }
            (sums, norm4, excluded)
        })
        .collect();
    let mut total = vec![0.0; (steps + 1) * n * n];
    let mut norm4 = vec![0.0; steps + 1];
    let mut excluded = 0;
    for (sums, q4, ex) in &chunks {
        for (t, s) in total.iter_mut().zip(sums) {
            *t += s;
        }
        for (t, q) in norm4.iter_mut().zip(q4) {
            *t += q;
        }
        excluded += ex;
    }
    // symmetric, so row-major and column-major layouts coincide
    let outer = total.chunks_exact(n * n).map(|s| Mat::from_column_slice(n, n, s)).collect();
    Sums { outer, norm4, excluded }
}

fn check_paths(sys: &BilinearSystem, x0: &Vector, paths: usize) -> Result<()> {
    if paths == 0 {
        return Err(Error::InvalidParameter("at least one path is required".into()));
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.state_dim())));
    }
    Ok(())
}

/// Euler–Maruyama second moments over `paths` independent paths.
pub fn simulate_sde(sys: &BilinearSystem, x0: &Vector, grid: &[f64], paths: usize, seed: u64) -> Result<MomentPath> {
    let h = check_uniform(grid)?;
    check_paths(sys, x0, paths)?;
    let Sums { outer: mut moments, norm4: mut mean_norm4, excluded } =
        moment_sums(&Kernel::new(sys), &Init::Fixed(x0.as_slice()), grid.len() - 1, h, paths, seed);
    let retained = paths - excluded;
    if retained > 0 {
        let r = retained as f64;
        moments.iter_mut().for_each(|m| *m /= r);
        mean_norm4.iter_mut().for_each(|q| *q /= r);
    }
    Ok(MomentPath { grid: grid.to_vec(), moments, mean_norm4, paths, excluded, seed })
}

/// Bias constant `c'` of the moment tolerance: `T (‖A‖₂² + ½ λ²) tr Z0`
/// with `λ = 2‖A‖₂ + Σ ‖N_k‖₂²` bounding the moment generator.
pub fn bias_constant(sys: &BilinearSystem, z0_trace: f64, t_end: f64) -> f64 {
    let a = spectral_norm(&sys.a);
    let lambda = 2.0 * a + sys.n.iter().map(|nk| spectral_norm(nk).powi(2)).sum::<f64>();
    t_end * (a * a + 0.5 * lambda * lambda) * z0_trace
}

#[derive(Clone, Debug)]
pub struct MomentCheck {
    /// `max_t ‖M̂(t) − Z̄(t)‖_F / max(1, ‖Z̄(t)‖_F)`.
    pub deviation: f64,
    /// `c/√M + c'·h` with `c` five sample standard deviations of `z zᵀ`.
    pub tolerance: f64,
    pub pass: bool,
    pub moments: MomentPath,
    pub reference: Vec<Mat>,
}

/// Compares Monte Carlo moments with the second-moment matrix ODE.
pub fn moment_check(sys: &BilinearSystem, x0: &Vector, grid: &[f64], paths: usize, seed: u64) -> Result<MomentCheck> {
    let h = check_uniform(grid)?;
    let moments = simulate_sde(sys, x0, grid, paths, seed)?;
    let z0 = x0 * x0.transpose();
    let reference = integrate_matrix_ode(sys, &z0, grid)?.matrices;
    let deviation = moments
        .moments
        .iter()
        .zip(&reference)
        .map(|(m, z)| relative_deviation(m, z))
        .fold(0.0, f64::max);
    let tr0 = z0.trace();
    let t_end = grid[grid.len() - 1];
    // c = STAT_CONST · sample std of z zᵀ, normalized like the deviation
    let spread = moments
        .outer_std()
        .iter()
        .zip(&reference)
        .map(|(sd, z)| sd / z.norm().max(1.0))
        .fold(0.0, f64::max);
    let tolerance = STAT_CONST * spread / (moments.retained().max(1) as f64).sqrt() + bias_constant(sys, tr0, t_end) * h;
    Ok(MomentCheck { deviation, tolerance, pass: deviation <= tolerance, moments, reference })
}

/// Mean-square decay constants with `tr M̂(t) ≤ ‖x0‖² k1 e^{−k2 t}`.
///
/// `k2` is the negated slope of the least-squares line through
/// `log tr M̂(t)` over the tail half of `[0, T]`; `k1` is the smallest
/// constant making the envelope hold at every simulated time.
#[derive(Clone, Debug)]
pub struct DecayFit {
    pub k1: f64,
    pub k2: f64,
    /// `exp(intercept)` of the regression line, unnormalized.
    pub k1_fit: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub excluded: usize,
}

/// Least-squares fit of `log y` against `log k1 − k2 t`; `k2` may be negative.
pub fn fit_log_decay(t: &[f64], y: &[f64]) -> Result<DecayFit> {
    let (ts, logs): (Vec<f64>, Vec<f64>) = t.iter().zip(y).filter(|(_, y)| **y > 0.0 && y.is_finite()).map(|(t, y)| (*t, y.ln())).unzip();
    fit_line(&ts, &logs)
}

fn fit_line(t: &[f64], logy: &[f64]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = t.iter().copied().zip(logy.iter().copied()).collect();
    if pts.len() < 2 {
        return Err(Error::FitQuality("fewer than two positive samples in the fit window".into()));
    }
    let k = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / k, b + y / k));
    let (stt, sty) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt).powi(2), b + (t - mt) * (y - my)));
    if stt == 0.0 {
        return Err(Error::FitQuality("fit window has zero length".into()));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let residual = (pts.iter().map(|(t, y)| (y - intercept - slope * t).powi(2)).sum::<f64>() / k).sqrt();
    Ok(DecayFit { k1: intercept.exp(), k2: -slope, k1_fit: intercept.exp(), residual, excluded: 0 })
}

/// Restart interval of the decay estimator: `0.5 / Σ‖N_k‖₂²`, clamped to
/// `[0.05, 1]`.
pub fn restart_interval(sys: &BilinearSystem) -> f64 {
    let noise: f64 = sys.n.iter().map(|nk| spectral_norm(nk).powi(2)).sum();
    if noise == 0.0 {
        1.0
    } else {
        (0.5 / noise).clamp(0.05, 1.0)
    }
}

/// Signed decay rate of `tr E[z zᵀ]` fitted over `[T/2, T]`; usable for
/// unstable systems too.
///
/// Multiplicative noise makes `|z|²` heavy tailed, so a plain sample mean
/// over a long horizon underestimates growth. The estimator therefore
/// restarts every [`restart_interval`]: the next segment starts from
/// Gaussian states whose covariance is the current (trace-normalized)
/// estimate. By linearity of the moment equation this keeps the estimate
/// unbiased while resetting the tails.
pub fn decay_rate_estimate(sys: &BilinearSystem, x0: &Vector, t_end: f64, h: f64, paths: usize, seed: u64) -> Result<DecayFit> {
    if !(t_end > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter("horizon and step must be positive".into()));
    }
    check_paths(sys, x0, paths)?;
    if x0.norm() == 0.0 {
        return Err(Error::InvalidParameter("decay fitting needs a nonzero initial state".into()));
    }
    let kernel = Kernel::new(sys);
    let seg_steps = ((restart_interval(sys) / h).round() as usize).max(1);
    let total_steps = (t_end / h).round() as usize;
    let mut times = vec![0.0];
    let mut log_trace = vec![x0.norm_squared().ln()];
    let mut log_scale = 0.0;
    let mut factor = Mat::zeros(0, 0);
    let mut excluded = 0;
    let mut done = 0;
    for segment in 0u64.. {
        if done >= total_steps {
            break;
        }
        let steps = seg_steps.min(total_steps - done);
        let seg_seed = seed ^ (segment + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let init = if segment == 0 { Init::Fixed(x0.as_slice()) } else { Init::Gaussian(&factor) };
        let Sums { outer: sums, excluded: ex, .. } = moment_sums(&kernel, &init, steps, h, paths, seg_seed);
        excluded += ex;
        let retained = (paths - ex) as f64;
        if retained == 0.0 {
            return Err(Error::FitQuality("every path diverged".into()));
        }
        for (i, s) in sums.iter().enumerate().skip(1) {
            times.push((done + i) as f64 * h);
            log_trace.push(log_scale + (s.trace() / retained).ln());
        }
        let end = &sums[steps] / retained;
        let tr = end.trace();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::FitQuality(format!("moment trace degenerated to {tr}")));
        }
        log_scale += tr.ln();
        factor = psd_factor(&(end / tr), 1e-10)?.0;
        done += steps;
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = times.iter().zip(&log_trace).filter(|(t, _)| **t >= 0.5 * t_end).map(|(t, y)| (*t, *y)).unzip();
    let mut fit = fit_line(&ts, &ys)?;
    fit.excluded = excluded;
    let peak = times.iter().zip(&log_trace).map(|(t, y)| y + fit.k2 * t).fold(f64::NEG_INFINITY, f64::max);
    fit.k1 = (peak - x0.norm_squared().ln()).exp();
    Ok(fit)
}

/// Decay constants `k1, k2 > 0` for a mean-square stable system, from
/// Euler–Maruyama with step `1e-3`.
pub fn decay_fit(sys: &BilinearSystem, x0: &Vector, t_end: f64, paths: usize, seed: u64) -> Result<DecayFit> {
    if !kron_stability(sys)?.mean_square_stable {
        return Err(Error::NotMeanSquareStable("decay fitting needs a mean-square stable system".into()));
    }
    let fit = decay_rate_estimate(sys, x0, t_end, 1e-3, paths, seed)?;
    if !(fit.k2 > 0.0) {
        return Err(Error::FitQuality(format!("fitted decay rate {} is not positive", fit.k2)));
    }
    Ok(fit)
}

/// Source of `E[z zᵀ]` in the domination check.
#[derive(Clone, Copy, Debug)]
pub enum MomentSource {
    /// Second-moment matrix ODE.
    Exact,
    MonteCarlo { paths: usize, seed: u64 },
}

/// Margins of `x(t)x(t)ᵀ ≼ exp{∫₀ᵗ ‖u⁰‖²} E[z(t) z(t)ᵀ]` for the homogeneous
/// bilinear flow. The Monte Carlo source needs a uniform grid.
pub fn bilinear_stochastic_domination(
    sys: &BilinearSystem,
    u: &ControlSignal,
    x0: &Vector,
    grid: &[f64],
    source: MomentSource,
) -> Result<GronwallReport> {
    match source {
        MomentSource::Exact => gronwall_check(sys, u, x0, 0.0, grid),
        MomentSource::MonteCarlo { paths, seed } => {
            let mp = simulate_sde(sys, x0, grid, paths, seed)?;
            let phi = fundamental_solution(sys, u, 0.0, grid)?;
            let mut margins = Vec::with_capacity(grid.len());
            let mut scale: f64 = 0.0;
            let mut energy = 0.0;
            for (i, &t) in grid.iter().enumerate() {
                if i > 0 {
                    energy += masked_energy(sys, u, grid[i - 1], t);
                }
                let x = &phi.matrices[i] * x0;
                let m = &mp.moments[i];
                scale = scale.max(spectral_norm(m));
                margins.push(min_sym_eigenvalue(&(m * energy.exp() - &x * x.transpose())));
            }
            Ok(GronwallReport { grid: grid.to_vec(), margins, scale })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::uniform_grid;

    fn scalar(a: f64, c: f64) -> BilinearSystem {
        BilinearSystem::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
            vec![Mat::from_element(1, 1, c)],
        )
        .unwrap()
    }

    #[test]
    fn moments_are_deterministic_and_psd() {
        let sys = crate::benchgen::toy_system();
        let x0 = Vector::from_column_slice(&[1.0, -0.5]);
        let grid = uniform_grid(0.2, 1e-2);
        let a = simulate_sde(&sys, &x0, &grid, 300, 9).unwrap();
        let b = simulate_sde(&sys, &x0, &grid, 300, 9).unwrap();
        assert_eq!(a.moments, b.moments);
        for m in &a.moments {
            assert_eq!(m, &m.transpose());
            assert!(min_sym_eigenvalue(m) >= -1e-14 * m.norm());
        }
        let c = simulate_sde(&sys, &x0, &grid, 300, 10).unwrap();
        assert_ne!(a.moments, c.moments);
    }

    #[test]
    fn thread_count_does_not_change_moments() {
        let sys = crate::benchgen::toy_system();
        let x0 = Vector::from_column_slice(&[1.0, 1.0]);
        let grid = uniform_grid(0.1, 1e-2);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_sde(&sys, &x0, &grid, 1000, 4).unwrap())
        };
        assert_eq!(run(1).moments, run(4).moments);
    }

    #[test]
    fn zero_noise_reproduces_euler_flow() {
        let sys = BilinearSystem::linear(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0)).unwrap();
        let grid = uniform_grid(1.0, 1e-3);
        let mp = simulate_sde(&sys, &Vector::from_element(1, 1.0), &grid, 3, 1).unwrap();
        let expect = (1.0f64 - 1e-3).powi(2000);
        assert!((mp.moments.last().unwrap()[(0, 0)] - expect).abs() < 1e-12);
        assert!((expect - (-2.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn zero_initial_state_gives_zero_moments() {
        let sys = crate::benchgen::toy_system();
        let chk = moment_check(&sys, &Vector::zeros(2), &uniform_grid(0.5, 1e-2), 50, 1).unwrap();
        assert_eq!(chk.deviation, 0.0);
        assert!(chk.pass);
    }

    #[test]
    fn non_uniform_grid_rejected() {
        let sys = scalar(-1.0, 1.0);
        let x0 = Vector::from_element(1, 1.0);
        assert!(matches!(simulate_sde(&sys, &x0, &[0.0, 0.1, 0.3], 10, 1), Err(Error::Grid(_))));
        assert!(simulate_sde(&sys, &x0, &[0.0, 0.1], 0, 1).is_err());
    }

    #[test]
    fn log_fit_recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let fit = fit_log_decay(&t, &y).unwrap();
        assert!((fit.k1 - 3.0).abs() < 1e-12 && (fit.k2 - 0.7).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn decay_fit_rejects_unstable() {
        let sys = scalar(-1.0, 1.5);
        assert!(matches!(decay_fit(&sys, &Vector::from_element(1, 1.0), 1.0, 10, 1), Err(Error::NotMeanSquareStable(_))));
    }

    #[test]
    fn divergent_paths_are_excluded() {
        let sys = scalar(30.0, 0.0);
        let mp = simulate_sde(&sys, &Vector::from_element(1, 1.0), &uniform_grid(1.0, 1e-3), 20, 1).unwrap();
        assert_eq!(mp.excluded, 20);
        assert!(mp.unstable_warning());
    }
}
