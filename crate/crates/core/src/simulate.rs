//! Fixed-step RK4 integration of bilinear state equations, fundamental
//! solutions and the second-moment matrix ODE, plus the numerical checks
//! built on them.
//!
//! Every integrator steps between consecutive output grid points and also
//! splits at control breakpoints, so no step straddles a jump of `u`. The
//! control is evaluated with the matching one-sided limit at sub-interval
//! ends.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{expm, min_sym_eigenvalue, spectral_norm, sym, Mat, Vector};
use crate::quad::integrate_piecewise;
use crate::sysmodel::{BilinearSystem, ControlSignal, Side};

/// State norm beyond which an integration is declared divergent.
pub const OVERFLOW_GUARD: f64 = 1e12;
/// Default upper bound on the RK4 step.
pub const DEFAULT_MAX_STEP: f64 = 1e-3;

/// Time-stepping parameters.
#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    pub max_step: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { max_step: DEFAULT_MAX_STEP }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
}

impl Trajectory {
    /// CSV with header `t,x_1..x_n,y_1..y_p`; state columns only when requested.
    pub fn to_csv(&self, with_states: bool) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let p = self.outputs.first().map_or(0, |y| y.len());
        let mut out = String::from("t");
        if with_states {
            for i in 1..=n {
                let _ = write!(out, ",x_{i}");
            }
        }
        for i in 1..=p {
            let _ = write!(out, ",y_{i}");
        }
        out.push('\n');
        for (k, t) in self.grid.iter().enumerate() {
            out.push_str(&crate::io::fmt_num(*t));
            if with_states {
                for v in self.states[k].iter() {
                    out.push(',');
                    out.push_str(&crate::io::fmt_num(*v));
                }
            }
            for v in self.outputs[k].iter() {
                out.push(',');
                out.push_str(&crate::io::fmt_num(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// A matrix-valued solution sampled on a grid.
#[derive(Clone, Debug)]
pub struct MatrixPath {
    pub grid: Vec<f64>,
    pub matrices: Vec<Mat>,
}

impl MatrixPath {
    pub fn last(&self) -> &Mat {
        self.matrices.last().expect("matrix paths are never empty")
    }
}

/// Checks that a grid is strictly increasing and starts at `start`.
pub fn check_grid(grid: &[f64], start: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Grid("empty time grid".into()));
    }
    if grid[0] != start {
        return Err(Error::Grid(format!("grid starts at {} instead of {start}", grid[0])));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Uniform grid `0, dt, …` ending exactly at `t_end`.
pub fn uniform_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let steps = ((t_end / dt).round() as usize).max(1);
    (0..=steps).map(|i| t_end * i as f64 / steps as f64).collect()
}

/// Uniform grid on `[0, t_end]` with the control breakpoints inserted.
pub fn control_grid(u: &ControlSignal, t_end: f64, dt: f64) -> Vec<f64> {
    let mut grid = uniform_grid(t_end, dt);
    for bp in u.breakpoints() {
        if bp > 0.0 && bp < t_end {
            grid.push(bp);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end.max(1.0));
    grid
}

/// Generic RK4 driver for `Ẋ = f(u(t), X)` over the output grid.
///
/// Each grid interval is cut at interior control breakpoints; every piece is
/// split into equal steps of length at most `max_step`.
fn rk4_path<F>(
    grid: &[f64],
    breakpoints: &[f64],
    control: Option<&ControlSignal>,
    max_step: f64,
    x0: Mat,
    post: impl Fn(Mat) -> Mat,
    f: F,
) -> Result<Vec<Mat>>
where
    F: Fn(&Vector, &Mat) -> Mat,
{
    if !(max_step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {max_step}")));
    }
    let empty = Vector::zeros(0);
    let ctl = |t: f64, side: Side| control.map_or_else(|| empty.clone(), |u| u.eval_side(t, side));
    let mut out = Vec::with_capacity(grid.len());
    let mut x = x0;
    out.push(x.clone());
    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mut cuts = vec![t0];
        cuts.extend(breakpoints.iter().copied().filter(|&b| b > t0 && b < t1));
        cuts.push(t1);
        for piece in cuts.windows(2) {
            let (a, b) = (piece[0], piece[1]);
            let steps = ((b - a) / max_step).ceil().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            for i in 0..steps {
                let s = a + h * i as f64;
                let e = if i + 1 == steps { b } else { a + h * (i + 1) as f64 };
                let u0 = ctl(s, Side::Right);
                let um = ctl(0.5 * (s + e), Side::Right);
                let u1 = ctl(e, if i + 1 == steps { Side::Left } else { Side::Right });
                let k1 = f(&u0, &x);
                let k2 = f(&um, &(&x + &k1 * (0.5 * h)));
                let k3 = f(&um, &(&x + &k2 * (0.5 * h)));
                let k4 = f(&u1, &(&x + &k3 * h));
                x = post(x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0));
                let norm = x.norm();
                if !(norm <= OVERFLOW_GUARD) {
                    return Err(Error::Divergence { t: e, norm });
                }
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

fn check_control(sys: &BilinearSystem, u: &ControlSignal) -> Result<()> {
    if u.input_dim() != sys.input_dim() {
        return Err(Error::Dimension(format!(
            "control has {} channels, system has {} inputs",
            u.input_dim(),
            sys.input_dim()
        )));
    }
    Ok(())
}

/// `(A + Σ u_k N_k) X`.
fn bilinear_generator(sys: &BilinearSystem, u: &Vector, x: &Mat) -> Mat {
    let mut out = &sys.a * x;
    for (k, nk) in sys.n.iter().enumerate() {
        if u[k] != 0.0 {
            out += nk * x * u[k];
        }
    }
    out
}

/// Integrates `ẋ = A x + B u + Σ N_k x u_k` from `x(0) = x0`.
pub fn integrate_bilinear(sys: &BilinearSystem, u: &ControlSignal, x0: &Vector, grid: &[f64]) -> Result<Trajectory> {
    integrate_bilinear_with(sys, u, x0, grid, &StepOptions::default())
}

pub fn integrate_bilinear_with(
    sys: &BilinearSystem,
    u: &ControlSignal,
    x0: &Vector,
    grid: &[f64],
    opts: &StepOptions,
) -> Result<Trajectory> {
    check_grid(grid, 0.0)?;
    check_control(sys, u)?;
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.state_dim())));
    }
    let h = opts.max_step;
    let x0m = Mat::from_column_slice(x0.len(), 1, x0.as_slice());
    let path = rk4_path(grid, &u.breakpoints(), Some(u), h, x0m, |x| x, |uv, x| {
        let bu = &sys.b * uv;
        bilinear_generator(sys, uv, x) + Mat::from_column_slice(bu.len(), 1, bu.as_slice())
    })?;
    let states: Vec<Vector> = path.into_iter().map(|m| Vector::from_column_slice(m.as_slice())).collect();
    let outputs = states.iter().map(|x| &sys.c * x).collect();
    Ok(Trajectory { grid: grid.to_vec(), states, outputs })
}

/// Fundamental solution `Φ_u(t, s)` on a grid starting at `s`.
pub fn fundamental_solution(sys: &BilinearSystem, u: &ControlSignal, s: f64, grid: &[f64]) -> Result<MatrixPath> {
    check_grid(grid, s)?;
    check_control(sys, u)?;
    let n = sys.state_dim();
    let h = DEFAULT_MAX_STEP;
    let matrices = rk4_path(grid, &u.breakpoints(), Some(u), h, Mat::identity(n, n), |x| x, |uv, x| {
        bilinear_generator(sys, uv, x)
    })?;
    Ok(MatrixPath { grid: grid.to_vec(), matrices })
}

/// Integrates `Ż = A Z + Z Aᵀ + Σ N_k Z N_kᵀ` from a symmetric `Z0`,
/// symmetrizing after every step.
pub fn integrate_matrix_ode(sys: &BilinearSystem, z0: &Mat, grid: &[f64]) -> Result<MatrixPath> {
    integrate_matrix_ode_with(sys, z0, grid, &StepOptions::default())
}

pub fn integrate_matrix_ode_with(sys: &BilinearSystem, z0: &Mat, grid: &[f64], opts: &StepOptions) -> Result<MatrixPath> {
    let n = sys.state_dim();
    if z0.shape() != (n, n) {
        return Err(Error::Dimension(format!("Z0 is {:?}, expected {n}x{n}", z0.shape())));
    }
    if (z0 - z0.transpose()).norm() > 1e-12 * z0.norm() {
        return Err(Error::InvalidParameter("initial value of the matrix ODE must be symmetric".into()));
    }
    check_grid(grid, grid.first().copied().unwrap_or(0.0))?;
    let h = opts.max_step;
    let matrices = rk4_path(grid, &[], None, h, z0.clone(), |x| sym(&x), |_, z| {
        let az = &sys.a * z;
        let mut out = &az + az.transpose();
        for nk in &sys.n {
            out += nk * z * nk.transpose();
        }
        out
    })?;
    Ok(MatrixPath { grid: grid.to_vec(), matrices })
}

/// `sup_t ‖y(t)‖₂` over the trajectory grid.
pub fn sup_output(traj: &Trajectory) -> f64 {
    traj.outputs.iter().map(|y| y.norm()).fold(0.0, f64::max)
}

/// Margins of the matrix Gronwall ordering
/// `x(t)x(t)ᵀ ≼ exp{∫ₛᵗ ‖u⁰‖²} Z̄(t − s, x0 x0ᵀ)` for the homogeneous flow.
#[derive(Clone, Debug)]
pub struct GronwallReport {
    pub grid: Vec<f64>,
    /// Smallest eigenvalue of the difference at each grid point.
    pub margins: Vec<f64>,
    /// `max_t ‖Z̄(t)‖₂`, the scale for the acceptance tolerance.
    pub scale: f64,
}

impl GronwallReport {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether every margin is at least `−rel_tol · scale`.
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.min_margin() >= -rel_tol * self.scale
    }
}

/// `∫ₐᵇ ‖u⁰(τ)‖² dτ` by adaptive quadrature split at control breakpoints.
pub fn masked_energy(sys: &BilinearSystem, u: &ControlSignal, a: f64, b: f64) -> f64 {
    let mask = sys.u0_mask();
    if mask.all_inactive() || b <= a {
        return 0.0;
    }
    let b_eff = b.min(u.horizon());
    if b_eff <= a {
        return 0.0;
    }
    integrate_piecewise(|t| mask.masked_norm_sq(&u.eval(t)), a, b_eff, &u.breakpoints(), 1e-10)
}

/// Evaluates the Gronwall ordering on a grid starting at `s`.
pub fn gronwall_check(sys: &BilinearSystem, u: &ControlSignal, x0: &Vector, s: f64, grid: &[f64]) -> Result<GronwallReport> {
    check_grid(grid, s)?;
    let phi = fundamental_solution(sys, u, s, grid)?;
    let shifted: Vec<f64> = grid.iter().map(|t| t - s).collect();
    let z0 = x0 * x0.transpose();
    let zbar = integrate_matrix_ode(sys, &z0, &shifted)?;
    let mut margins = Vec::with_capacity(grid.len());
    let mut scale: f64 = 0.0;
    let mut energy = 0.0;
    for (i, &t) in grid.iter().enumerate() {
        if i > 0 {
            energy += masked_energy(sys, u, grid[i - 1], t);
        }
        let x = &phi.matrices[i] * x0;
        let z = &zbar.matrices[i];
        scale = scale.max(spectral_norm(z));
        let diff = z * energy.exp() - &x * x.transpose();
        margins.push(min_sym_eigenvalue(&diff));
    }
    Ok(GronwallReport { grid: grid.to_vec(), margins, scale })
}

/// Checks `‖x(t)‖² ≤ exp{γ²‖u⁰‖²} ‖x0‖² k1 e^{−k2 t}` for the homogeneous
/// flow (`B = 0`) driven by `u`, with absolute slack `1e-6`.
pub fn decay_envelope_check(
    sys: &BilinearSystem,
    u: &ControlSignal,
    x0: &Vector,
    gamma: f64,
    k1: f64,
    k2: f64,
    grid: &[f64],
) -> Result<bool> {
    let homogeneous = BilinearSystem { b: Mat::zeros(sys.state_dim(), sys.input_dim()), ..sys.clone() };
    let traj = integrate_bilinear(&homogeneous, u, x0, grid)?;
    let energy = masked_energy(sys, u, 0.0, grid.last().copied().unwrap_or(0.0));
    let factor = (gamma * gamma * energy).exp() * x0.norm_squared() * k1;
    Ok(traj
        .grid
        .iter()
        .zip(&traj.states)
        .all(|(t, x)| x.norm_squared() <= factor * (-k2 * t).exp() + 1e-6))
}

/// `x(t) = Φ(t, 0) x0 + ∫₀ᵗ Φ(t, s) B u(s) ds` evaluated at the final grid
/// point by the trapezoidal rule over the grid, using
/// `Φ(t, s) = Φ(t, 0) Φ(s, 0)⁻¹`.
pub fn superposition(sys: &BilinearSystem, u: &ControlSignal, x0: &Vector, grid: &[f64]) -> Result<Vector> {
    let phi = fundamental_solution(sys, u, 0.0, grid)?;
    let phi_t = phi.last();
    let weights = phi
        .matrices
        .iter()
        .map(|m| Ok(phi_t * crate::linalg::inverse(m, "fundamental solution")? * &sys.b))
        .collect::<Result<Vec<Mat>>>()?;
    let mut acc = phi_t * x0;
    for i in 1..grid.len() {
        let h = grid[i] - grid[i - 1];
        // one-sided control values so that jumps on grid points are resolved
        let left = &weights[i - 1] * u.eval_side(grid[i - 1], Side::Right);
        let right = &weights[i] * u.eval_side(grid[i], Side::Left);
        acc += (left + right) * (0.5 * h);
    }
    Ok(acc)
}

/// Matrix exponential reference `e^{A t} Z0 e^{Aᵀ t}` for the linear case.
pub fn linear_moment(a: &Mat, z0: &Mat, t: f64) -> Mat {
    let e = expm(&(a * t));
    &e * z0 * e.transpose()
}
