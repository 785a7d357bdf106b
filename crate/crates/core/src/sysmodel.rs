//! Bilinear system model, controls, γ-rescaling and the error system.
//!
//! A bilinear system is
//!
//! ```text
//! ẋ = A x + B u + Σ_k N_k x u_k,   y = C x
//! ```
//!
//! with `A, N_k ∈ ℝ^{n×n}`, `B ∈ ℝ^{n×m}`, `C ∈ ℝ^{p×n}`. Reduced-order models
//! are ordinary [`BilinearSystem`] values of a smaller state dimension.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, expm, spectral_abscissa, spectral_norm, Mat, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub n: Vec<Mat>,
}

/// One violated invariant found by [`BilinearSystem::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    Dimension(String),
    NonFinite(String),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Dimension(s) => write!(f, "dimension: {s}"),
            Diagnostic::NonFinite(s) => write!(f, "non-finite entry: {s}"),
        }
    }
}

impl BilinearSystem {
    /// Builds a system and rejects any invariant violation.
    pub fn new(a: Mat, b: Mat, c: Mat, n: Vec<Mat>) -> Result<Self> {
        let sys = BilinearSystem { a, b, c, n };
        let diags = sys.validate();
        if diags.is_empty() {
            Ok(sys)
        } else {
            let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            Err(Error::Dimension(msg.join("; ")))
        }
    }

    /// Linear system (all `N_k = 0`).
    pub fn linear(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        Self::new(a, b, c, vec![Mat::zeros(n, n); m])
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Lists every violated invariant; empty when the system is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let n = self.a.nrows();
        let m = self.b.ncols();
        if self.a.ncols() != n {
            out.push(Diagnostic::Dimension(format!(
                "A is {}x{}, expected square",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n {
            out.push(Diagnostic::Dimension(format!(
                "B has {} rows, expected {n}",
                self.b.nrows()
            )));
        }
        if self.c.ncols() != n {
            out.push(Diagnostic::Dimension(format!(
                "C has {} columns, expected {n}",
                self.c.ncols()
            )));
        }
        if self.n.len() != m {
            out.push(Diagnostic::Dimension(format!(
                "{} bilinear matrices for {m} inputs",
                self.n.len()
            )));
        }
        for (k, nk) in self.n.iter().enumerate() {
            if nk.shape() != (n, n) {
                out.push(Diagnostic::Dimension(format!(
                    "N_{} is {}x{}, expected {n}x{n}",
                    k + 1,
                    nk.nrows(),
                    nk.ncols()
                )));
            }
        }
        let mut check = |name: String, m: &Mat| {
            if m.iter().any(|x| !x.is_finite()) {
                out.push(Diagnostic::NonFinite(name));
            }
        };
        check("A".into(), &self.a);
        check("B".into(), &self.b);
        check("C".into(), &self.c);
        for (k, nk) in self.n.iter().enumerate() {
            check(format!("N_{}", k + 1), nk);
        }
        out
    }

    /// Replaces `(B, N_k)` by `(B/γ, N_k/γ)`; pair with the control `γ·u`.
    pub fn rescale(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rescaling factor must be positive, got {gamma}"
            )));
        }
        Ok(BilinearSystem {
            a: self.a.clone(),
            b: &self.b / gamma,
            c: self.c.clone(),
            n: self.n.iter().map(|nk| nk / gamma).collect(),
        })
    }

    /// State-space transformation `x_new = T x` given `T` and `T⁻¹`; with a
    /// `ρ×n` matrix `T` and right inverse `T⁻¹` this is an oblique projection.
    pub fn transform(&self, t: &Mat, t_inv: &Mat) -> Self {
        BilinearSystem {
            a: t * &self.a * t_inv,
            b: t * &self.b,
            c: &self.c * t_inv,
            n: self.n.iter().map(|nk| t * nk * t_inv).collect(),
        }
    }

    /// Mask of the control channels with a non-zero bilinear coupling.
    pub fn u0_mask(&self) -> U0Mask {
        U0Mask {
            active: self.n.iter().map(|nk| nk.norm() > 0.0).collect(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.n.iter().all(|nk| nk.norm() == 0.0)
    }

    /// `Σ_k ‖N_k‖₂²` with spectral norms.
    pub fn bilinear_norm_sq(&self) -> f64 {
        self.n.iter().map(|nk| spectral_norm(nk).powi(2)).sum()
    }
}

/// Sufficient rescaling threshold `γ* = sqrt(Σ‖N_k‖₂² · ∫₀^∞ ‖e^{At}‖₂² dt)`.
///
/// Any `γ > γ*` makes the rescaled system mean-square stable. The integral is
/// truncated where `‖e^{AT}‖₂² < 1e-12` and evaluated with composite Simpson
/// rules on successively halved step sizes until two estimates agree to a
/// relative `1e-8`.
pub fn gamma_threshold(sys: &BilinearSystem) -> Result<f64> {
    let abscissa = spectral_abscissa(&sys.a);
    if !(abscissa < 0.0) {
        return Err(Error::NotHurwitz { abscissa });
    }
    let s = sys.bilinear_norm_sq();
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok((s * exp_norm_sq_integral(&sys.a)?).sqrt())
}

/// `∫₀^∞ ‖e^{At}‖₂² dt` for Hurwitz `A`.
pub fn exp_norm_sq_integral(a: &Mat) -> Result<f64> {
    let abscissa = spectral_abscissa(a);
    if !(abscissa < 0.0) {
        return Err(Error::NotHurwitz { abscissa });
    }
    // truncation horizon: double until the squared norm has decayed
    let mut t_end = 1.0 / abscissa.abs();
    let mut guard = 0;
    while spectral_norm(&expm(&(a * t_end))).powi(2) >= 1e-12 {
        t_end *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::Inconsistent(
                "matrix exponential does not decay".into(),
            ));
        }
    }
    let simpson = |intervals: usize| -> f64 {
        let h = t_end / intervals as f64;
        let step = expm(&(a * h));
        let mut e = Mat::identity(a.nrows(), a.ncols());
        let mut acc = 0.0;
        for i in 0..=intervals {
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * spectral_norm(&e).powi(2);
            e = &step * e;
        }
        acc * h / 3.0
    };
    let mut intervals = 64;
    let mut prev = simpson(intervals);
    loop {
        intervals *= 2;
        let cur = simpson(intervals);
        if (cur - prev).abs() <= 1e-8 * cur.abs() || intervals >= 1 << 15 {
            return Ok(cur);
        }
        prev = cur;
    }
}

/// Boolean mask selecting the control components `u⁰` that enter bilinearly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct U0Mask {
    pub active: Vec<bool>,
}

impl U0Mask {
    pub fn all_inactive(&self) -> bool {
        self.active.iter().all(|a| !a)
    }

    /// `‖u⁰‖₂²` for one control value.
    pub fn masked_norm_sq(&self, u: &Vector) -> f64 {
        u.iter()
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|(x, _)| x * x)
            .sum()
    }
}

/// Which one-sided limit to take at a control discontinuity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

type ControlFn = dyn Fn(f64, Side) -> Vector + Send + Sync;

/// An input signal `u: [0, ∞) → ℝᵐ` that vanishes after its horizon.
#[derive(Clone)]
pub struct ControlSignal {
    m: usize,
    horizon: f64,
    breakpoints: Vec<f64>,
    f: Arc<ControlFn>,
}

impl fmt::Debug for ControlSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSignal")
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl ControlSignal {
    /// Wraps a smooth function on `[0, horizon]`.
    pub fn from_fn<F>(m: usize, horizon: f64, f: F) -> Self
    where
        F: Fn(f64) -> Vector + Send + Sync + 'static,
    {
        ControlSignal {
            m,
            horizon,
            breakpoints: Vec::new(),
            f: Arc::new(move |t, _| f(t)),
        }
    }

    pub fn zero(m: usize) -> Self {
        ControlSignal {
            m,
            horizon: 0.0,
            breakpoints: Vec::new(),
            f: Arc::new(move |_, _| Vector::zeros(m)),
        }
    }

    /// `u(t) = value` on `[0, horizon]` (horizon may be infinite).
    pub fn constant(value: Vector, horizon: f64) -> Self {
        let m = value.len();
        ControlSignal {
            m,
            horizon,
            breakpoints: Vec::new(),
            f: Arc::new(move |_, _| value.clone()),
        }
    }

    /// Piecewise-constant control: `values[i]` on `[times[i], times[i+1])`,
    /// zero after the last time point.
    pub fn piecewise_constant(times: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if times.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidParameter(
                "piecewise-constant control needs one more time point than values".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid(
                "piecewise-constant breakpoints must increase from 0".into(),
            ));
        }
        let m = values[0].len();
        let horizon = *times.last().unwrap();
        let breakpoints = times[1..].to_vec();
        let tt = times.clone();
        Ok(ControlSignal {
            m,
            horizon,
            breakpoints,
            f: Arc::new(move |t, side| {
                // interval index honouring the requested one-sided limit
                let idx = match side {
                    Side::Right => tt.partition_point(|&s| s <= t),
                    Side::Left => tt.partition_point(|&s| s < t),
                };
                let i = idx.saturating_sub(1).min(values.len() - 1);
                values[i].clone()
            }),
        })
    }

    /// Linear interpolation of samples `(times[i], values[i])`, zero after the
    /// last sample.
    pub fn sampled(times: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::InvalidParameter(
                "sampled control needs at least two samples with matching times".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("sample times must increase from 0".into()));
        }
        let m = values[0].len();
        let horizon = *times.last().unwrap();
        Ok(ControlSignal {
            m,
            horizon,
            breakpoints: Vec::new(),
            f: Arc::new(move |t, _| {
                let i = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[i - 1], times[i]);
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                &values[i - 1] * (1.0 - w) + &values[i] * w
            }),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time points at which the control may jump, including a finite horizon.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bp = self.breakpoints.clone();
        if self.horizon.is_finite() && self.horizon > 0.0 {
            bp.push(self.horizon);
        }
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        bp
    }

    /// Right-continuous evaluation; zero for `t > horizon`.
    pub fn eval(&self, t: f64) -> Vector {
        self.eval_side(t, Side::Right)
    }

    /// One-sided evaluation used by integrators that must not straddle jumps.
    pub fn eval_side(&self, t: f64, side: Side) -> Vector {
        let beyond = match side {
            Side::Left => t > self.horizon,
            Side::Right => t >= self.horizon,
        };
        if beyond || t < 0.0 {
            Vector::zeros(self.m)
        } else {
            (self.f)(t, side)
        }
    }

    /// The control `α·u`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let f = Arc::clone(&self.f);
        ControlSignal {
            m: self.m,
            horizon: self.horizon,
            breakpoints: self.breakpoints.clone(),
            f: Arc::new(move |t, side| f(t, side) * alpha),
        }
    }
}

/// Augmented system whose output is `y − ŷ`.
#[derive(Clone, Debug)]
pub struct ErrorSystem {
    pub system: BilinearSystem,
    /// State dimension of the full system; the reduced block starts here.
    pub split: usize,
}

/// Assembles `(Aᵉ, Bᵉ, Cᵉ, N_kᵉ)` with block-diagonal dynamics,
/// stacked inputs and output matrix `[C, −Ĉ]`.
pub fn build_error_system(full: &BilinearSystem, reduced: &BilinearSystem) -> Result<ErrorSystem> {
    if full.input_dim() != reduced.input_dim() || full.output_dim() != reduced.output_dim() {
        return Err(Error::Dimension(format!(
            "full system has (m, p) = ({}, {}), reduced has ({}, {})",
            full.input_dim(),
            full.output_dim(),
            reduced.input_dim(),
            reduced.output_dim()
        )));
    }
    let (n, r) = (full.state_dim(), reduced.state_dim());
    let m = full.input_dim();
    let p = full.output_dim();
    let a = block_diag(&full.a, &reduced.a);
    let mut b = Mat::zeros(n + r, m);
    b.view_mut((0, 0), (n, m)).copy_from(&full.b);
    b.view_mut((n, 0), (r, m)).copy_from(&reduced.b);
    let mut c = Mat::zeros(p, n + r);
    c.view_mut((0, 0), (p, n)).copy_from(&full.c);
    c.view_mut((0, n), (p, r)).copy_from(&(-&reduced.c));
    let nk = full
        .n
        .iter()
        .zip(&reduced.n)
        .map(|(nf, nr)| block_diag(nf, nr))
        .collect();
    Ok(ErrorSystem {
        system: BilinearSystem { a, b, c, n: nk },
        split: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> BilinearSystem {
        BilinearSystem::new(
            Mat::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]),
            Mat::identity(2, 2),
            Mat::from_row_slice(1, 2, &[1.0, 1.0]),
            vec![
                Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]),
                Mat::zeros(2, 2),
            ],
        )
        .unwrap()
    }

    fn scalar(a: f64, n: f64, b: f64, c: f64) -> BilinearSystem {
        BilinearSystem::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, c),
            vec![Mat::from_element(1, 1, n)],
        )
        .unwrap()
    }

    #[test]
    fn toy_validates_clean() {
        assert!(toy().validate().is_empty());
    }

    #[test]
    fn missing_bilinear_matrix_is_one_diagnostic() {
        let mut s = toy();
        s.n.pop();
        let d = s.validate();
        assert_eq!(d.len(), 1);
        assert!(matches!(d[0], Diagnostic::Dimension(_)));
    }

    #[test]
    fn nan_is_one_diagnostic() {
        let mut s = toy();
        s.a[(0, 1)] = f64::NAN;
        let d = s.validate();
        assert_eq!(d, vec![Diagnostic::NonFinite("A".into())]);
    }

    #[test]
    fn rescale_divides_b_and_n() {
        let s = scalar(-1.0, 1.0, 1.0, 1.0).rescale(2.0).unwrap();
        assert_eq!(s.n[0][(0, 0)], 0.5);
        assert_eq!(s.b[(0, 0)], 0.5);
        assert_eq!(s.a[(0, 0)], -1.0);
        assert_eq!(toy().rescale(1.0).unwrap(), toy());
        assert!(toy().rescale(0.0).is_err());
        assert!(toy().rescale(-1.0).is_err());
    }

    #[test]
    fn gamma_threshold_scalar_and_linear() {
        let g = gamma_threshold(&scalar(-1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((g - 0.5f64.sqrt()).abs() < 1e-7, "{g}");
        let lin = BilinearSystem::linear(
            Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap();
        assert_eq!(gamma_threshold(&lin).unwrap(), 0.0);
        assert!(matches!(
            gamma_threshold(&scalar(0.5, 1.0, 1.0, 1.0)),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn u0_mask_follows_nonzero_n() {
        assert_eq!(toy().u0_mask().active, vec![true, false]);
        let lin = BilinearSystem::linear(Mat::identity(2, 2) * -1.0, Mat::identity(2, 2), Mat::identity(1, 2)).unwrap();
        assert!(lin.u0_mask().all_inactive());
    }

    #[test]
    fn error_system_blocks() {
        let full = toy();
        let red = scalar(-1.0, 0.3, 1.0, 2.0);
        let red = BilinearSystem {
            b: Mat::from_row_slice(1, 2, &[1.0, 0.5]),
            n: vec![red.n[0].clone(), Mat::zeros(1, 1)],
            ..red
        };
        let e = build_error_system(&full, &red).unwrap();
        assert_eq!(e.split, 2);
        let s = &e.system;
        assert_eq!(s.state_dim(), 3);
        for nk in &s.n {
            for i in 0..2 {
                assert_eq!(nk[(i, 2)], 0.0);
                assert_eq!(nk[(2, i)], 0.0);
            }
        }
        assert_eq!(s.c[(0, 2)], -2.0);
        assert_eq!(s.u0_mask().active, vec![true, false]);
        let bad = BilinearSystem::linear(Mat::identity(1, 1), Mat::identity(1, 1), Mat::identity(1, 1)).unwrap();
        assert!(build_error_system(&full, &bad).is_err());
    }

    #[test]
    fn control_vanishes_after_horizon() {
        let u = ControlSignal::constant(Vector::from_element(2, 1.0), 1.0);
        assert_eq!(u.eval(1.0 + 1e-12), Vector::zeros(2));
        assert_eq!(u.eval_side(1.0, Side::Left), Vector::from_element(2, 1.0));
        assert_eq!(u.eval_side(1.0, Side::Right), Vector::zeros(2));
        assert_eq!(u.breakpoints(), vec![1.0]);
    }

    #[test]
    fn piecewise_constant_sides() {
        let u = ControlSignal::piecewise_constant(
            vec![0.0, 0.5, 1.0],
            vec![Vector::from_element(1, 1.0), Vector::from_element(1, -2.0)],
        )
        .unwrap();
        assert_eq!(u.eval(0.25)[0], 1.0);
        assert_eq!(u.eval_side(0.5, Side::Left)[0], 1.0);
        assert_eq!(u.eval_side(0.5, Side::Right)[0], -2.0);
        assert_eq!(u.eval(1.5)[0], 0.0);
    }

    #[test]
    fn sampled_interpolates_linearly() {
        let u = ControlSignal::sampled(
            vec![0.0, 1.0, 2.0],
            vec![Vector::from_element(1, 0.0), Vector::from_element(1, 2.0), Vector::from_element(1, 0.0)],
        )
        .unwrap();
        assert!((u.eval(0.25)[0] - 0.5).abs() < 1e-15);
        assert!((u.eval(1.5)[0] - 1.0).abs() < 1e-15);
    }
}
