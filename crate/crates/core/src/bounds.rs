//! Output bounds, H2 output-error bounds, reachability estimates and the
//! weighted balanced-truncation / SPA error bounds.
//!
//! All bounds have the form `E · f(γu)` with an H2-type quantity `E` of the
//! `γ`-rescaled system(s) and the control factor
//! `f(v) = exp{½‖v⁰‖²_{L²}} ‖v‖_{L²}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramians::{clip_h2_sq, gramian_set, h2_error_from_set, h2_error_sq, reach_gramian};
use crate::linalg::{lu_solve, spectral_abscissa, spectral_norm, sym_eigen_desc, Mat, Vector};
use crate::lyapunov::{kron_operator, kron_stability};
use crate::mor::{balanced_hsv, spa_blocks, split};
use crate::quad::integrate_piecewise;
use crate::simulate::{control_grid, integrate_bilinear_with, sup_output, StepOptions};
use crate::sysmodel::{build_error_system, gamma_threshold, BilinearSystem, ControlSignal, U0Mask};

/// Margin applied to the sufficient rescaling threshold by the automatic rule.
pub const AUTO_GAMMA_MARGIN: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GammaPolicy {
    /// `γ = 1` when the system is mean-square stable, else
    /// `1.01·gamma_threshold`.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    /// `γ·sqrt(trace)` quantity of the rescaled system(s) without the `γ`.
    pub h2_quantity: f64,
    /// `exp{½γ²‖u⁰‖²} γ‖u‖`.
    pub control_factor: f64,
    pub bound: f64,
    pub gamma: f64,
    pub l2_u: f64,
    pub l2_u0: f64,
    pub simulated_sup: Option<f64>,
    /// `bound / simulated_sup`.
    pub ratio: Option<f64>,
}

impl BoundReport {
    fn new(h2_quantity: f64, gamma: f64, l2_u: f64, l2_u0: f64) -> Self {
        let control_factor = control_factor(gamma, l2_u, l2_u0);
        BoundReport {
            h2_quantity,
            control_factor,
            bound: h2_quantity * control_factor,
            gamma,
            l2_u,
            l2_u0,
            simulated_sup: None,
            ratio: None,
        }
    }

    /// Records a simulated supremum and the resulting ratio.
    pub fn with_simulation(mut self, sup: f64) -> Self {
        self.simulated_sup = Some(sup);
        self.ratio = Some(if sup > 0.0 { self.bound / sup } else { f64::INFINITY });
        self
    }

    /// Whether the simulated value stays below the bound up to `slack`.
    pub fn dominates(&self, slack: f64) -> bool {
        self.simulated_sup.is_none_or(|s| s <= self.bound + slack)
    }
}

/// `exp{½γ²‖u⁰‖²} γ‖u‖`.
pub fn control_factor(gamma: f64, l2_u: f64, l2_u0: f64) -> f64 {
    (0.5 * gamma * gamma * l2_u0 * l2_u0).exp() * gamma * l2_u
}

/// `(‖u‖_{L²}, ‖u⁰‖_{L²})` by adaptive Simpson quadrature over the support.
pub fn control_l2_norms(u: &ControlSignal, mask: &U0Mask) -> Result<(f64, f64)> {
    let t = u.horizon();
    if !t.is_finite() {
        return Err(Error::InvalidParameter("L2 norms need a control with finite horizon".into()));
    }
    if mask.active.len() != u.input_dim() {
        return Err(Error::Dimension("mask length differs from the control dimension".into()));
    }
    let bp = u.breakpoints();
    let full = integrate_piecewise(|s| u.eval(s).norm_squared(), 0.0, t, &bp, 1e-10);
    let masked = if mask.all_inactive() {
        0.0
    } else {
        integrate_piecewise(|s| mask.masked_norm_sq(&u.eval(s)), 0.0, t, &bp, 1e-10)
    };
    Ok((full.max(0.0).sqrt(), masked.max(0.0).sqrt()))
}

fn check_hurwitz(sys: &BilinearSystem) -> Result<()> {
    let abscissa = spectral_abscissa(&sys.a);
    if abscissa < 0.0 {
        Ok(())
    } else {
        Err(Error::NotHurwitz { abscissa })
    }
}

fn ms_stable_at(sys: &BilinearSystem, gamma: f64) -> Result<bool> {
    Ok(kron_stability(&sys.rescale(gamma)?)?.mean_square_stable)
}

/// Resolves a γ policy for a set of systems that must all be mean-square
/// stable after rescaling.
pub fn resolve_gamma(systems: &[&BilinearSystem], policy: GammaPolicy) -> Result<f64> {
    for s in systems {
        check_hurwitz(s)?;
    }
    match policy {
        GammaPolicy::Fixed(g) => {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::InvalidParameter(format!("gamma must be positive, got {g}")));
            }
            for (i, s) in systems.iter().enumerate() {
                if !ms_stable_at(s, g)? {
                    return Err(Error::InfeasibleGamma {
                        gamma: g,
                        reason: if i == 0 {
                            "rescaled system is not mean-square stable".into()
                        } else {
                            "rescaled reduced system is not mean-square stable".into()
                        },
                    });
                }
            }
            Ok(g)
        }
        GammaPolicy::Auto => {
            let mut all = true;
            for s in systems {
                all &= ms_stable_at(s, 1.0)?;
            }
            if all {
                return Ok(1.0);
            }
            let mut g: f64 = 0.0;
            for s in systems {
                g = g.max(gamma_threshold(s)?);
            }
            Ok(AUTO_GAMMA_MARGIN * g)
        }
    }
}

/// Output bound `γ sqrt(tr(C P_γ Cᵀ)) exp{½γ²‖u⁰‖²} ‖u‖`.
pub fn output_bound(sys: &BilinearSystem, u: &ControlSignal, policy: GammaPolicy) -> Result<BoundReport> {
    let gamma = resolve_gamma(&[sys], policy)?;
    let (l2_u, l2_u0) = control_l2_norms(u, &sys.u0_mask())?;
    let scaled = sys.rescale(gamma)?;
    let p = reach_gramian(&scaled)?;
    let tr = (&scaled.c * p * scaled.c.transpose()).trace();
    Ok(BoundReport::new(clip_h2_sq(tr)?, gamma, l2_u, l2_u0))
}

/// H2 output-error bound `E_γ f(γu)` with `E_γ` the H2 error of the
/// commonly rescaled pair.
pub fn output_error_bound(
    full: &BilinearSystem,
    reduced: &BilinearSystem,
    u: &ControlSignal,
    policy: GammaPolicy,
) -> Result<BoundReport> {
    check_hurwitz(full)?;
    let gamma = match resolve_gamma(&[full, reduced], policy) {
        Err(Error::NotHurwitz { abscissa }) => {
            return Err(Error::ReducedUnstable(format!("reduced state matrix has abscissa {abscissa:.3e}")))
        }
        Err(Error::InfeasibleGamma { gamma, reason }) if reason.contains("reduced") => {
            return Err(Error::ReducedUnstable(format!("not mean-square stable at gamma {gamma}")))
        }
        other => other?,
    };
    let mask = build_error_system(full, reduced)?.system.u0_mask();
    let (l2_u, l2_u0) = control_l2_norms(u, &mask)?;
    let f = full.rescale(gamma)?;
    let r = reduced.rescale(gamma)?;
    let set = gramian_set(&f, Some(&r))?;
    let e = h2_error_from_set(&f, &r, &set)?;
    Ok(BoundReport::new(e, gamma, l2_u, l2_u0))
}

/// One row of the reachability estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachDirection {
    pub lambda: f64,
    pub direction: Vec<f64>,
    /// `sqrt(λ_k) exp{½‖u⁰‖²} ‖u‖`.
    pub rhs: f64,
    /// Simulated `sup_t |⟨x(t), v_k⟩|` from a zero initial state.
    pub observed: Option<f64>,
}

/// Per-eigendirection bounds on `|⟨x(t), v_k⟩|` from the reachability Gramian.
pub fn reachability_estimate(sys: &BilinearSystem, u: &ControlSignal, simulate: bool) -> Result<Vec<ReachDirection>> {
    check_hurwitz(sys)?;
    let p = reach_gramian(sys)?;
    let (l2_u, l2_u0) = control_l2_norms(u, &sys.u0_mask())?;
    let factor = control_factor(1.0, l2_u, l2_u0);
    let (vals, vecs) = sym_eigen_desc(&p);
    let traj = if simulate {
        let grid = simulation_grid(sys, u);
        Some(integrate_bilinear_with(sys, u, &Vector::zeros(sys.state_dim()), &grid, &step_options(sys))?)
    } else {
        None
    };
    Ok(vals
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let v = vecs.column(k).into_owned();
            let observed = traj.as_ref().map(|t| t.states.iter().map(|x| x.dot(&v).abs()).fold(0.0, f64::max));
            ReachDirection {
                lambda,
                direction: v.iter().copied().collect(),
                rhs: lambda.max(0.0).sqrt() * factor,
                observed,
            }
        })
        .collect())
}

/// Result of a weighted (BT or SPA) bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedBound {
    pub report: BoundReport,
    /// The weighting matrix `K`.
    pub k: Mat,
    /// `tr(Σ₂ K)`.
    pub trace: f64,
    /// Squared H2 error of the corresponding reduced model from the three-trace formula.
    pub h2_error_sq: f64,
    /// `|tr(Σ₂K) − e²| / max(|e²|, tiny)`.
    pub identity_gap: f64,
}

fn identity_gap(trace: f64, e2: f64) -> f64 {
    let scale = e2.abs().max(trace.abs()).max(f64::MIN_POSITIVE);
    (trace - e2).abs() / scale
}

/// Verifies that `bal` has diagonal Gramians equal to `diag(hsv)` to `1e-6`.
fn check_balanced(bal: &BilinearSystem, hsv: &[f64]) -> Result<()> {
    if hsv.len() != bal.state_dim() {
        return Err(Error::Dimension(format!(
            "{} Hankel singular values for state dimension {}",
            hsv.len(),
            bal.state_dim()
        )));
    }
    let set = gramian_set(bal, None)?;
    let diag = balanced_hsv(&set.p, &set.q, 1e-6)?;
    let scale = hsv.first().copied().unwrap_or(1.0).abs().max(f64::MIN_POSITIVE);
    if diag.iter().zip(hsv).any(|(a, b)| (a - b).abs() > 1e-6 * scale) {
        return Err(Error::BalanceRequired("Gramian diagonal differs from the supplied Hankel singular values".into()));
    }
    Ok(())
}

fn check_split(n: usize, r: usize) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::InvalidParameter(format!("reduced order {r} outside 1..={n}")));
    }
    Ok(())
}

fn sigma2_trace(hsv: &[f64], r: usize, k: &Mat) -> f64 {
    hsv[r..].iter().enumerate().map(|(i, s)| s * k[(i, i)]).sum()
}

fn weighted_report(trace: f64, e2: f64, k: Mat, gamma: f64, mask: &U0Mask, u: &ControlSignal) -> Result<WeightedBound> {
    let (l2_u, l2_u0) = control_l2_norms(u, mask)?;
    let report = BoundReport::new(clip_h2_sq(trace)?, gamma, l2_u, l2_u0);
    Ok(WeightedBound { report, identity_gap: identity_gap(trace, e2), k, trace, h2_error_sq: e2 })
}

/// Balanced-truncation bound `sqrt(tr(Σ₂ K_BT)) f(γu)` for a balanced
/// realization `bal` (of the `γ`-rescaled system when `γ ≠ 1`) with
/// `K_BT = B₂B₂ᵀ + 2P_{g,2}A₂₁ᵀ + Σ_k (2N_{k,22}P_{g,2}N_{k,21}ᵀ + 2N_{k,21}P_{g,1}N_{k,21}ᵀ − N_{k,21}P̂N_{k,21}ᵀ)`.
pub fn bt_weighted_bound(bal: &BilinearSystem, hsv: &[f64], r: usize, u: &ControlSignal, gamma: f64) -> Result<WeightedBound> {
    let n = bal.state_dim();
    check_split(n, r)?;
    check_balanced(bal, hsv)?;
    let mask = bal.u0_mask();
    if r == n {
        return weighted_report(0.0, 0.0, Mat::zeros(0, 0), gamma, &mask, u);
    }
    let rom = BilinearSystem {
        a: bal.a.view((0, 0), (r, r)).into_owned(),
        b: bal.b.rows(0, r).into_owned(),
        c: bal.c.columns(0, r).into_owned(),
        n: bal.n.iter().map(|nk| nk.view((0, 0), (r, r)).into_owned()).collect(),
    };
    let set = gramian_set(bal, Some(&rom)).map_err(|e| match e {
        Error::NotMeanSquareStable(s) => Error::NotMeanSquareStable(s),
        other => other,
    })?;
    let p_hat = set.p_hat.as_ref().expect("requested");
    let p_g = set.p_g.as_ref().expect("requested");
    let pg1 = p_g.rows(0, r).into_owned();
    let pg2 = p_g.rows(r, n - r).into_owned();
    let b2 = bal.b.rows(r, n - r).into_owned();
    let a = split(&bal.a, r);
    let mut k = &b2 * b2.transpose() + &pg2 * a.b21.transpose() * 2.0;
    for nk in &bal.n {
        let s = split(nk, r);
        k += &s.b22 * &pg2 * s.b21.transpose() * 2.0;
        k += &s.b21 * &pg1 * s.b21.transpose() * 2.0;
        k -= &s.b21 * p_hat * s.b21.transpose();
    }
    let trace = sigma2_trace(hsv, r, &k);
    let e2 = h2_error_sq(bal, &rom, &set)?;
    weighted_report(trace, e2, k, gamma, &mask, u)
}

/// SPA bound `sqrt(tr(Σ₂ K_SPA)) f(γu)` with
/// `K_SPA = B₂B₂ᵀ − 2(A₂₂P_{g,2} + A₂₁P_{g,1})(A₂₂⁻¹A₂₁)ᵀ
///   + 2Σ_k (N_{k,22}P_{g,2} + N_{k,21}P_{g,1}) M_kᵀ − Σ_k M_k P̂ M_kᵀ`,
/// `M_k = N_{k,21} − N_{k,22}A₂₂⁻¹A₂₁`.
pub fn spa_weighted_bound(bal: &BilinearSystem, hsv: &[f64], r: usize, u: &ControlSignal, gamma: f64) -> Result<WeightedBound> {
    let n = bal.state_dim();
    check_split(n, r)?;
    check_balanced(bal, hsv)?;
    let mask = bal.u0_mask();
    if r == n {
        return weighted_report(0.0, 0.0, Mat::zeros(0, 0), gamma, &mask, u);
    }
    let rom = spa_blocks(bal, r)?;
    // the reduced operator must be nonsingular and mean-square stable
    let kr = kron_operator(&rom.a, &rom.a, &rom.n, &rom.n);
    if lu_solve(&kr, &Mat::zeros(r * r, 1), "reduced Kronecker operator").is_err() {
        return Err(Error::ReducedUnstable("reduced Kronecker operator is singular".into()));
    }
    if !kron_stability(&rom)?.mean_square_stable {
        return Err(Error::ReducedUnstable("SPA reduced model is not mean-square stable".into()));
    }
    let set = gramian_set(bal, Some(&rom))?;
    let p_hat = set.p_hat.as_ref().expect("requested");
    let p_g = set.p_g.as_ref().expect("requested");
    let pg1 = p_g.rows(0, r).into_owned();
    let pg2 = p_g.rows(r, n - r).into_owned();
    let b2 = bal.b.rows(r, n - r).into_owned();
    let a = split(&bal.a, r);
    let x = lu_solve(&a.b22, &a.b21, "A22 block")?;
    let mut k = &b2 * b2.transpose() - (&a.b22 * &pg2 + &a.b21 * &pg1) * x.transpose() * 2.0;
    for nk in &bal.n {
        let s = split(nk, r);
        let mk = &s.b21 - &s.b22 * &x;
        k += (&s.b22 * &pg2 + &s.b21 * &pg1) * mk.transpose() * 2.0;
        k -= &mk * p_hat * mk.transpose();
    }
    let trace = sigma2_trace(hsv, r, &k);
    let e2 = h2_error_sq(bal, &rom, &set)?;
    weighted_report(trace, e2, k, gamma, &mask, u)
}

/// RK4 step bounded by the stability limit of the state matrix.
pub fn step_options(sys: &BilinearSystem) -> StepOptions {
    let norm = spectral_norm(&sys.a);
    let limit = if norm > 0.0 { 2.0 / norm } else { f64::INFINITY };
    StepOptions { max_step: crate::simulate::DEFAULT_MAX_STEP.min(limit) }
}

/// Simulation window `[0, T_u + 5/|α(A)|]` sampled at `1e-3`, with the
/// control breakpoints inserted.
pub fn simulation_grid(sys: &BilinearSystem, u: &ControlSignal) -> Vec<f64> {
    let abscissa = spectral_abscissa(&sys.a).abs().max(1e-3);
    let horizon = if u.horizon().is_finite() { u.horizon() } else { 0.0 };
    let t_end = (horizon + 5.0 / abscissa).max(1e-3);
    control_grid(u, t_end, 1e-3)
}

/// `sup_t ‖y(t)‖₂` from a zero initial state over the simulation window.
pub fn simulated_sup_output(sys: &BilinearSystem, u: &ControlSignal) -> Result<f64> {
    let grid = simulation_grid(sys, u);
    let traj = integrate_bilinear_with(sys, u, &Vector::zeros(sys.state_dim()), &grid, &step_options(sys))?;
    Ok(sup_output(&traj))
}

/// `sup_t ‖y(t) − ŷ(t)‖₂` from zero initial states over the window of the
/// full system.
pub fn simulated_sup_error(full: &BilinearSystem, reduced: &BilinearSystem, u: &ControlSignal) -> Result<f64> {
    let grid = simulation_grid(full, u);
    let opts = StepOptions { max_step: step_options(full).max_step.min(step_options(reduced).max_step) };
    let y = integrate_bilinear_with(full, u, &Vector::zeros(full.state_dim()), &grid, &opts)?;
    let yr = integrate_bilinear_with(reduced, u, &Vector::zeros(reduced.state_dim()), &grid, &opts)?;
    Ok(y.outputs.iter().zip(&yr.outputs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}
