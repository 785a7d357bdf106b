//! Gramian sets, time-limited Gramians, H2 norms and H2 errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, Mat};
use crate::lyapunov::{
    solve_generalized_lyapunov_with, solve_generalized_sylvester_with, GramianSide, SolverOptions,
};
use crate::simulate::{check_grid, integrate_matrix_ode_with, StepOptions};
use crate::sysmodel::BilinearSystem;

/// Roundoff allowance for a negative squared H2 error.
pub const TRACE_CLIP: f64 = 1e-10;

/// Reachability/observability Gramians of a system and, for a full/reduced
/// pair, the reduced and mixed Gramians.
///
/// Mixed Gramians solve
/// `A P_g + P_g Âᵀ + Σ N_k P_g N̂_kᵀ = −B B̂ᵀ` (`n×r`) and
/// `Âᵀ Q_g + Q_g A + Σ N̂_kᵀ Q_g N_k = −Ĉᵀ C` (`r×n`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramianSet {
    pub p: Mat,
    pub q: Mat,
    pub p_hat: Option<Mat>,
    pub q_hat: Option<Mat>,
    pub p_g: Option<Mat>,
    pub q_g: Option<Mat>,
    /// Rescaling factor the systems were divided by before solving.
    pub gamma_used: f64,
    /// Relative residual of each solved equation, keyed by Gramian name.
    pub residuals: BTreeMap<String, f64>,
}

fn bbt(b: &Mat) -> Mat {
    b * b.transpose()
}

fn ctc(c: &Mat) -> Mat {
    c.transpose() * c
}

/// Reachability Gramian of `sys`.
pub fn reach_gramian(sys: &BilinearSystem) -> Result<Mat> {
    Ok(solve_generalized_lyapunov_with(&sys.a, &sys.n, &bbt(&sys.b), GramianSide::Reach, &SolverOptions::default())?.0)
}

/// Observability Gramian of `sys`.
pub fn observe_gramian(sys: &BilinearSystem) -> Result<Mat> {
    Ok(solve_generalized_lyapunov_with(&sys.a, &sys.n, &ctc(&sys.c), GramianSide::Observe, &SolverOptions::default())?.0)
}

/// `P_g` with `A P_g + P_g Âᵀ + Σ N_k P_g N̂_kᵀ = −B B̂ᵀ`.
pub fn mixed_reach_gramian(full: &BilinearSystem, reduced: &BilinearSystem, opts: &SolverOptions) -> Result<(Mat, f64)> {
    let rhs = -(&full.b * reduced.b.transpose());
    let (x, info) = solve_generalized_sylvester_with(&full.a, &reduced.a, &full.n, &reduced.n, &rhs, opts)?;
    Ok((x, info.residual))
}

/// `Q_g` with `Âᵀ Q_g + Q_g A + Σ N̂_kᵀ Q_g N_k = −Ĉᵀ C`.
pub fn mixed_observe_gramian(full: &BilinearSystem, reduced: &BilinearSystem, opts: &SolverOptions) -> Result<(Mat, f64)> {
    let rhs = -(reduced.c.transpose() * &full.c);
    let n1: Vec<Mat> = reduced.n.iter().map(|m| m.transpose()).collect();
    let n2: Vec<Mat> = full.n.iter().map(|m| m.transpose()).collect();
    let (x, info) = solve_generalized_sylvester_with(&reduced.a.transpose(), &full.a.transpose(), &n1, &n2, &rhs, opts)?;
    Ok((x, info.residual))
}

/// Gramians of `full` and, when given, of `reduced` and the mixed pair.
pub fn gramian_set(full: &BilinearSystem, reduced: Option<&BilinearSystem>) -> Result<GramianSet> {
    gramian_set_with(full, reduced, &SolverOptions::default())
}

/// As [`gramian_set`] after rescaling both systems by `γ`.
pub fn gramian_set_scaled(full: &BilinearSystem, reduced: Option<&BilinearSystem>, gamma: f64) -> Result<GramianSet> {
    let full = full.rescale(gamma)?;
    let reduced = reduced.map(|r| r.rescale(gamma)).transpose()?;
    let mut set = gramian_set(&full, reduced.as_ref())?;
    set.gamma_used = gamma;
    Ok(set)
}

pub fn gramian_set_with(full: &BilinearSystem, reduced: Option<&BilinearSystem>, opts: &SolverOptions) -> Result<GramianSet> {
    let mut residuals = BTreeMap::new();
    let (p, info) = solve_generalized_lyapunov_with(&full.a, &full.n, &bbt(&full.b), GramianSide::Reach, opts)?;
    residuals.insert("P".to_string(), info.residual);
    let (q, info) = solve_generalized_lyapunov_with(&full.a, &full.n, &ctc(&full.c), GramianSide::Observe, opts)?;
    residuals.insert("Q".to_string(), info.residual);

    let (mut p_hat, mut q_hat, mut p_g, mut q_g) = (None, None, None, None);
    if let Some(red) = reduced {
        if red.input_dim() != full.input_dim() || red.output_dim() != full.output_dim() {
            return Err(Error::Dimension("reduced system has different input/output dimensions".into()));
        }
        let (ph, info) = solve_generalized_lyapunov_with(&red.a, &red.n, &bbt(&red.b), GramianSide::Reach, opts)
            .map_err(reduced_error)?;
        residuals.insert("P_hat".to_string(), info.residual);
        let (qh, info) = solve_generalized_lyapunov_with(&red.a, &red.n, &ctc(&red.c), GramianSide::Observe, opts)
            .map_err(reduced_error)?;
        residuals.insert("Q_hat".to_string(), info.residual);
        let (pg, res) = mixed_reach_gramian(full, red, opts)?;
        residuals.insert("P_g".to_string(), res);
        let (qg, res) = mixed_observe_gramian(full, red, opts)?;
        residuals.insert("Q_g".to_string(), res);
        p_hat = Some(ph);
        q_hat = Some(qh);
        p_g = Some(pg);
        q_g = Some(qg);
    }
    Ok(GramianSet { p, q, p_hat, q_hat, p_g, q_g, gamma_used: 1.0, residuals })
}

fn reduced_error(e: Error) -> Error {
    match e {
        Error::NotMeanSquareStable(s) => Error::ReducedUnstable(s),
        other => other,
    }
}

/// `P_t = ∫₀ᵗ Z̄(s, BBᵀ) ds` on a grid.
#[derive(Clone, Debug)]
pub struct TimeLimitedGramian {
    pub grid: Vec<f64>,
    pub p_t: Vec<Mat>,
}

impl TimeLimitedGramian {
    /// Smallest eigenvalue over all consecutive increments `P_{t_{i+1}} − P_{t_i}`.
    pub fn min_increment_eigenvalue(&self) -> f64 {
        self.p_t
            .windows(2)
            .map(|w| min_sym_eigenvalue(&(&w[1] - &w[0])))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Integrates the matrix ODE from `Z̄(0) = BBᵀ` with RK4 and accumulates
/// `P_t` by the trapezoidal rule on the integration grid, with the
/// Euler–Maclaurin end correction per output interval.
///
/// The grid must start at 0 and increase. Internally the ODE is sampled
/// with the RK4 step, so the trapezoid error stays below the integrator
/// error.
pub fn time_limited_gramian(sys: &BilinearSystem, grid: &[f64]) -> Result<TimeLimitedGramian> {
    time_limited_gramian_with(sys, grid, &StepOptions::default())
}

pub fn time_limited_gramian_with(sys: &BilinearSystem, grid: &[f64], opts: &StepOptions) -> Result<TimeLimitedGramian> {
    check_grid(grid, 0.0)?;
    let n = sys.state_dim();
    let generator = |z: &Mat| -> Mat {
        let az = &sys.a * z;
        let mut out = &az + az.transpose();
        for nk in &sys.n {
            out += nk * z * nk.transpose();
        }
        out
    };
    // fine grid: every output interval split into RK4-sized pieces
    let mut fine = vec![0.0];
    let mut segments = Vec::with_capacity(grid.len());
    for w in grid.windows(2) {
        let steps = ((w[1] - w[0]) / opts.max_step).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / steps as f64;
        let start = fine.len() - 1;
        for i in 1..steps {
            fine.push(w[0] + h * i as f64);
        }
        fine.push(w[1]);
        segments.push((start, fine.len() - 1, h));
    }
    let path = integrate_matrix_ode_with(sys, &bbt(&sys.b), &fine, opts)?;
    let z = &path.matrices;
    let mut acc = Mat::zeros(n, n);
    let mut p_t = Vec::with_capacity(grid.len());
    p_t.push(acc.clone());
    for (start, end, h) in segments {
        for i in (start + 1)..=end {
            acc += (&z[i - 1] + &z[i]) * (0.5 * h);
        }
        // Euler–Maclaurin end correction with the exact derivative of Z̄
        acc -= (generator(&z[end]) - generator(&z[start])) * (h * h / 12.0);
        p_t.push(acc.clone());
    }
    Ok(TimeLimitedGramian { grid: grid.to_vec(), p_t })
}

/// `sqrt(tr(C P Cᵀ))` with `P` the reachability Gramian.
pub fn h2_norm(sys: &BilinearSystem) -> Result<f64> {
    let p = reach_gramian(sys)?;
    Ok((&sys.c * p * sys.c.transpose()).trace().max(0.0).sqrt())
}

fn h2_traces(full: &BilinearSystem, reduced: &BilinearSystem, set: &GramianSet) -> Result<(f64, f64, f64)> {
    let (p_hat, p_g) = match (&set.p_hat, &set.p_g) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidParameter("Gramian set lacks reduced and mixed Gramians".into())),
    };
    let t1 = (&full.c * &set.p * full.c.transpose()).trace();
    let t2 = (&reduced.c * p_hat * reduced.c.transpose()).trace();
    let t3 = (&full.c * p_g * reduced.c.transpose()).trace();
    Ok((t1, t2, t3))
}

/// Squared H2 error from the three-trace formula
/// `tr(C P Cᵀ) + tr(Ĉ P̂ Ĉᵀ) − 2 tr(C P_g Ĉᵀ)`, without clipping.
pub fn h2_error_sq(full: &BilinearSystem, reduced: &BilinearSystem, set: &GramianSet) -> Result<f64> {
    let (t1, t2, t3) = h2_traces(full, reduced, set)?;
    Ok(t1 + t2 - 2.0 * t3)
}

/// Clipped H2 error from a Gramian set. The roundoff allowance grows with
/// `tr(C P Cᵀ) + tr(Ĉ P̂ Ĉᵀ)`, the size of the cancelling terms.
pub fn h2_error_from_set(full: &BilinearSystem, reduced: &BilinearSystem, set: &GramianSet) -> Result<f64> {
    let (t1, t2, t3) = h2_traces(full, reduced, set)?;
    clip_h2_sq_scaled(t1 + t2 - 2.0 * t3, t1.abs() + t2.abs())
}

/// H2 norm of the error system `Σ − Σ̂`.
pub fn h2_error(full: &BilinearSystem, reduced: &BilinearSystem) -> Result<f64> {
    h2_error_from_set(full, reduced, &gramian_set(full, Some(reduced))?)
}

/// Square root of a squared H2 quantity, clipping roundoff-level negatives.
pub fn clip_h2_sq(e2: f64) -> Result<f64> {
    clip_h2_sq_scaled(e2, 1.0)
}

/// As [`clip_h2_sq`] with the allowance `1e-10·max(1, scale)`.
pub fn clip_h2_sq_scaled(e2: f64, scale: f64) -> Result<f64> {
    if e2 >= 0.0 {
        Ok(e2.sqrt())
    } else if e2 >= -TRACE_CLIP * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Inconsistent(format!("squared H2 error is negative ({e2:.3e})")))
    }
}
