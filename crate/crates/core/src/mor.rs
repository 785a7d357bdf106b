//! Square-root balancing, balanced truncation (BT), singular perturbation
//! approximation (SPA), bilinear IRKA and H2 optimality residuals.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramians::{gramian_set, GramianSet};
use crate::linalg::{complex_eigen, cond, inverse, lu_solve, orth, psd_factor, sort_spectrum, to_complex, CMat, Mat};
use crate::lyapunov::{kron_stability, sylvester_dense, SolverMethod, SolverOptions};
use crate::sysmodel::BilinearSystem;

/// Smallest admissible `λ_min/λ_max` of a Gramian before balancing.
pub const RANK_TOL: f64 = 1e-12;

/// `S` and `S⁻¹` such that `S P Sᵀ = S⁻ᵀ Q S⁻¹ = diag(hsv)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalancingTransform {
    pub s: Mat,
    pub s_inv: Mat,
    /// Hankel singular values in descending order.
    pub hsv: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Bt,
    Spa,
    Irka,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bt" => Ok(Method::Bt),
            "spa" => Ok(Method::Spa),
            "irka" => Ok(Method::Irka),
            other => Err(Error::Parse(format!("unknown reduction method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReductionResult {
    pub rom: BilinearSystem,
    pub method: Method,
    pub transform: Option<BalancingTransform>,
    pub hsv_kept: Vec<f64>,
    pub hsv_dropped: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean-square stability of the reduced model, as verified numerically.
    pub rom_mean_square_stable: bool,
    /// Projection bases `(V, W)` for projection-based methods.
    pub projection: Option<(Mat, Mat)>,
    /// Non-fatal diagnostics such as split singular value clusters.
    pub warnings: Vec<String>,
}

/// Square-root balancing from `P = K Kᵀ`, `Q = L Lᵀ` and the SVD `Kᵀ L = V Σ Uᵀ`,
/// giving `S = Σ^{-1/2} Uᵀ Lᵀ` and `S⁻¹ = K V Σ^{-1/2}`.
pub fn balance(p: &Mat, q: &Mat) -> Result<BalancingTransform> {
    check_square_pair(p, q)?;
    let (k, ratio) = psd_factor(p, 1e-10)?;
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { which: "P", ratio });
    }
    let (l, ratio) = psd_factor(q, 1e-10)?;
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { which: "Q", ratio });
    }
    let t = square_root(&k, &l, p.nrows());
    if t.hsv.last().is_some_and(|&s| !(s > 0.0)) {
        return Err(Error::RankDeficient { which: "PQ", ratio: 0.0 });
    }
    Ok(t)
}

/// Rank-revealing variant of [`balance`] for numerically singular Gramians:
/// keeps the `ρ` Hankel singular values above `rel_tol·σ₁`, so `S` is `ρ×n`
/// and `S⁻¹` is `n×ρ`. `hsv` still lists all `n` values.
pub fn balance_lowrank(p: &Mat, q: &Mat, rel_tol: f64) -> Result<BalancingTransform> {
    check_square_pair(p, q)?;
    let (k, _) = psd_factor(p, 1e-8)?;
    let (l, _) = psd_factor(q, 1e-8)?;
    let hsv = square_root(&k, &l, 0).hsv;
    let top = hsv.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::RankDeficient { which: "PQ", ratio: 0.0 });
    }
    let rank = hsv.iter().take_while(|&&s| s > rel_tol * top).count();
    let mut t = square_root(&k, &l, rank);
    t.hsv = hsv;
    Ok(t)
}

fn check_square_pair(p: &Mat, q: &Mat) -> Result<()> {
    let n = p.nrows();
    if p.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::Dimension("Gramians must be square of equal size".into()));
    }
    Ok(())
}

/// Square-root transform keeping the `rank` largest singular values of `Kᵀ L`.
fn square_root(k: &Mat, l: &Mat, rank: usize) -> BalancingTransform {
    let n = k.nrows();
    let svd = (k.transpose() * l).svd(true, true);
    let v_left = svd.u.expect("requested");
    let u_right = svd.v_t.expect("requested").transpose();
    let sv = svd.singular_values;
    let mut idx: Vec<usize> = (0..n).collect();
    // stable sort keeps the original order on ties
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let hsv: Vec<f64> = idx.iter().map(|&i| sv[i]).collect();
    let mut s = Mat::zeros(rank, n);
    let mut s_inv = Mat::zeros(n, rank);
    let lu = l * &u_right;
    let kv = k * &v_left;
    for (row, &i) in idx.iter().take(rank).enumerate() {
        let w = sv[i].powf(-0.5);
        s.set_row(row, &(lu.column(i).transpose() * w));
        s_inv.set_column(row, &(kv.column(i) * w));
    }
    BalancingTransform { s, s_inv, hsv }
}

/// Relative cutoff of [`balance_lowrank`] when BT or SPA meet a
/// rank-deficient Gramian.
pub const LOWRANK_TOL: f64 = 1e-12;

/// Strict balancing, falling back to the rank-revealing variant (with a
/// warning) when a Gramian is numerically singular.
fn balance_for_order(gramians: &GramianSet, r: usize, warnings: &mut Vec<String>) -> Result<BalancingTransform> {
    match balance(&gramians.p, &gramians.q) {
        Err(Error::RankDeficient { which, ratio }) => {
            let t = balance_lowrank(&gramians.p, &gramians.q, LOWRANK_TOL)?;
            let rank = t.s.nrows();
            if rank < r {
                return Err(Error::RankDeficient { which, ratio });
            }
            warnings.push(format!(
                "Gramian {which} is numerically rank deficient (ratio {ratio:.3e}); balanced on the leading {rank} Hankel singular values"
            ));
            Ok(t)
        }
        other => other,
    }
}

/// The balanced realization `(S A S⁻¹, S B, C S⁻¹, S N_k S⁻¹)`.
pub fn balanced_realization(sys: &BilinearSystem, t: &BalancingTransform) -> BilinearSystem {
    sys.transform(&t.s, &t.s_inv)
}

/// Blocks of a matrix partitioned after `r` rows/columns.
pub(crate) struct Blocks {
    pub b11: Mat,
    pub b12: Mat,
    pub b21: Mat,
    pub b22: Mat,
}

pub(crate) fn split(m: &Mat, r: usize) -> Blocks {
    let n = m.nrows();
    Blocks {
        b11: m.view((0, 0), (r, r)).into_owned(),
        b12: m.view((0, r), (r, n - r)).into_owned(),
        b21: m.view((r, 0), (n - r, r)).into_owned(),
        b22: m.view((r, r), (n - r, n - r)).into_owned(),
    }
}

fn check_order(n: usize, r: usize) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::InvalidParameter(format!("reduced order {r} outside 1..={n}")));
    }
    Ok(())
}

fn cluster_warning(hsv: &[f64], r: usize) -> Vec<String> {
    if r < hsv.len() && hsv[r - 1] - hsv[r] < 1e-10 * hsv[0] {
        vec![format!(
            "order {r} splits a Hankel singular value cluster ({:.6e} vs {:.6e})",
            hsv[r - 1], hsv[r]
        )]
    } else {
        Vec::new()
    }
}

fn rom_stable(rom: &BilinearSystem) -> Result<bool> {
    Ok(kron_stability(rom)?.mean_square_stable)
}

/// Balanced truncation: leading `r×r` blocks of the balanced realization.
pub fn balanced_truncation(sys: &BilinearSystem, r: usize, gramians: &GramianSet) -> Result<ReductionResult> {
    let n = sys.state_dim();
    check_order(n, r)?;
    let mut warnings = Vec::new();
    let t = balance_for_order(gramians, r, &mut warnings)?;
    warnings.extend(cluster_warning(&t.hsv, r));
    let bal = balanced_realization(sys, &t);
    let rom = BilinearSystem {
        a: bal.a.view((0, 0), (r, r)).into_owned(),
        b: bal.b.rows(0, r).into_owned(),
        c: bal.c.columns(0, r).into_owned(),
        n: bal.n.iter().map(|nk| nk.view((0, 0), (r, r)).into_owned()).collect(),
    };
    let stable = rom_stable(&rom)?;
    Ok(ReductionResult {
        rom,
        method: Method::Bt,
        warnings,
        hsv_kept: t.hsv[..r].to_vec(),
        hsv_dropped: t.hsv[r..].to_vec(),
        transform: Some(t),
        iterations: 0,
        converged: true,
        rom_mean_square_stable: stable,
        projection: None,
    })
}

/// Singular perturbation approximation `(Ā, B₁, C̄, N̄_k)` with
/// `Ā = A₁₁ − A₁₂A₂₂⁻¹A₂₁`, `C̄ = C₁ − C₂A₂₂⁻¹A₂₁`, `N̄_k = N_k,₁₁ − N_k,₁₂A₂₂⁻¹A₂₁`.
pub fn singular_perturbation(sys: &BilinearSystem, r: usize, gramians: &GramianSet) -> Result<ReductionResult> {
    let n = sys.state_dim();
    check_order(n, r)?;
    let mut warnings = Vec::new();
    let t = balance_for_order(gramians, r, &mut warnings)?;
    warnings.extend(cluster_warning(&t.hsv, r));
    let bal = balanced_realization(sys, &t);
    let rom = spa_blocks(&bal, r)?;
    let m = bal.state_dim();
    if r < m {
        let a22 = bal.a.view((r, r), (m - r, m - r)).into_owned();
        warnings.push(format!("cond(A22) = {:.3e}", cond(&a22)));
    }
    let stable = rom_stable(&rom)?;
    Ok(ReductionResult {
        rom,
        method: Method::Spa,
        warnings,
        hsv_kept: t.hsv[..r].to_vec(),
        hsv_dropped: t.hsv[r..].to_vec(),
        transform: Some(t),
        iterations: 0,
        converged: true,
        rom_mean_square_stable: stable,
        projection: None,
    })
}

/// SPA reduced matrices of an already balanced system.
pub fn spa_blocks(bal: &BilinearSystem, r: usize) -> Result<BilinearSystem> {
    let n = bal.state_dim();
    check_order(n, r)?;
    if r == n {
        return Ok(bal.clone());
    }
    let a = split(&bal.a, r);
    // X = A₂₂⁻¹ A₂₁
    let x = lu_solve(&a.b22, &a.b21, "A22 block").map_err(|_| {
        Error::Singular(format!("A22 block is singular (condition estimate {:.3e})", cond(&a.b22)))
    })?;
    let c1 = bal.c.columns(0, r).into_owned();
    let c2 = bal.c.columns(r, n - r).into_owned();
    Ok(BilinearSystem {
        a: &a.b11 - &a.b12 * &x,
        b: bal.b.rows(0, r).into_owned(),
        c: c1 - c2 * &x,
        n: bal
            .n
            .iter()
            .map(|nk| {
                let s = split(nk, r);
                s.b11 - s.b12 * &x
            })
            .collect(),
    })
}

/// Starting point of the IRKA iteration.
#[derive(Clone, Debug)]
pub enum IrkaInit {
    /// Balanced truncation at the target order.
    Bt,
    /// Seeded random Hurwitz reduced model.
    Random(u64),
    Given(BilinearSystem),
}

#[derive(Clone, Debug)]
pub struct IrkaOptions {
    pub init: IrkaInit,
    /// Relative change of the sorted reduced spectrum that counts as converged.
    pub tol: f64,
    pub maxit: usize,
    /// Largest `n·r` solved with complex dense vectorization; larger problems
    /// use the equivalent real Sylvester equations.
    pub dense_limit: usize,
}

impl Default for IrkaOptions {
    fn default() -> Self {
        IrkaOptions { init: IrkaInit::Bt, tol: 1e-8, maxit: 100, dense_limit: 2000 }
    }
}

fn realify(v: &CMat, r: usize) -> Result<Mat> {
    let n = v.nrows();
    let mut stacked = Mat::zeros(n, 2 * v.ncols());
    for j in 0..v.ncols() {
        for i in 0..n {
            stacked[(i, j)] = v[(i, j)].re;
            stacked[(i, v.ncols() + j)] = v[(i, j)].im;
        }
    }
    orth(&stacked, r).map_err(|_| Error::DegenerateShift("projection basis lost rank".into()))
}

/// Interpolation bases `(V, W)` for the current reduced model through the
/// spectral decomposition `Â = R Λ R⁻¹`.
fn irka_bases(sys: &BilinearSystem, rom: &BilinearSystem, dense_limit: usize) -> Result<(Mat, Mat)> {
    let n = sys.state_dim();
    let r = rom.state_dim();
    if n * r > dense_limit {
        // real form: V spans P_g, W spans Q_gᵀ of the current pair
        let opts = SolverOptions { method: Some(SolverMethod::SchurKrylov), ..Default::default() };
        let (v, _) = crate::gramians::mixed_reach_gramian(sys, rom, &opts).map_err(degenerate)?;
        let (w, _) = crate::gramians::mixed_observe_gramian(sys, rom, &opts).map_err(degenerate)?;
        let v = orth(&v, r).map_err(|_| Error::DegenerateShift("V lost rank".into()))?;
        let w = orth(&w.transpose(), r).map_err(|_| Error::DegenerateShift("W lost rank".into()))?;
        return Ok((v, w));
    }
    let (lambda, rvec) = complex_eigen(&rom.a);
    let s = {
        let inv = rvec.clone().try_inverse().ok_or_else(|| {
            Error::DegenerateShift("reduced state matrix is not diagonalizable".into())
        })?;
        if !inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::DegenerateShift("reduced state matrix is not diagonalizable".into()));
        }
        inv
    };
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(lambda));
    let b_t = &s * to_complex(&rom.b);
    let c_t = to_complex(&rom.c) * &rvec;
    let n_t: Vec<CMat> = rom.n.iter().map(|nk| &s * to_complex(nk) * &rvec).collect();

    let a_c = to_complex(&sys.a);
    let n_c: Vec<CMat> = sys.n.iter().map(to_complex).collect();
    // −V D − A V − Σ N_k V Ñ_kᵀ = B B̃ᵀ
    let rhs_v = -(to_complex(&sys.b) * b_t.transpose());
    let v = sylvester_dense(&a_c, &d, &n_c, &n_t, &rhs_v).map_err(degenerate)?;
    // −W D − Aᵀ W − Σ N_kᵀ W Ñ_k = Cᵀ C̃
    let at_c = a_c.transpose();
    let nt_c: Vec<CMat> = n_c.iter().map(|m| m.transpose()).collect();
    let n_tt: Vec<CMat> = n_t.iter().map(|m| m.transpose()).collect();
    let rhs_w = -(to_complex(&sys.c).transpose() * c_t);
    let w = sylvester_dense(&at_c, &d, &nt_c, &n_tt, &rhs_w).map_err(degenerate)?;
    Ok((realify(&v, r)?, realify(&w, r)?))
}

fn degenerate(e: Error) -> Error {
    match e {
        Error::Singular(s) => Error::DegenerateShift(s),
        other => other,
    }
}

/// Petrov–Galerkin projection `((WᵀV)⁻¹WᵀAV, (WᵀV)⁻¹WᵀB, CV, (WᵀV)⁻¹WᵀN_kV)`.
pub fn project(sys: &BilinearSystem, v: &Mat, w: &Mat) -> Result<BilinearSystem> {
    let wtv = w.transpose() * v;
    let left = lu_solve(&wtv, &w.transpose(), "WᵀV").map_err(|_| Error::ProjectionBreakdown)?;
    Ok(BilinearSystem {
        a: &left * &sys.a * v,
        b: &left * &sys.b,
        c: &sys.c * v,
        n: sys.n.iter().map(|nk| &left * nk * v).collect(),
    })
}

fn sorted_spectrum(a: &Mat) -> Vec<Complex64> {
    let mut ev = crate::linalg::eigenvalues(a);
    sort_spectrum(&mut ev);
    ev
}

fn spectrum_change(old: &[Complex64], new: &[Complex64]) -> f64 {
    let diff: f64 = old.iter().zip(new).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = old.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Bilinear IRKA: fixed-point iteration on the interpolation bases until the
/// sorted spectrum of `Â` settles.
pub fn bilinear_irka(sys: &BilinearSystem, r: usize, opts: &IrkaOptions) -> Result<ReductionResult> {
    let n = sys.state_dim();
    check_order(n, r)?;
    let mut rom = match &opts.init {
        IrkaInit::Bt => balanced_truncation(sys, r, &gramian_set(sys, None)?)?.rom,
        IrkaInit::Random(seed) => {
            let mut init = crate::benchgen::random_stable_system(
                r,
                sys.input_dim(),
                sys.output_dim(),
                *seed,
                crate::benchgen::StabilityTarget::Hurwitz,
            )?;
            for nk in init.n.iter_mut() {
                *nk *= 0.1;
            }
            init
        }
        IrkaInit::Given(g) => {
            if g.state_dim() != r || g.input_dim() != sys.input_dim() || g.output_dim() != sys.output_dim() {
                return Err(Error::Dimension("initial reduced model has the wrong dimensions".into()));
            }
            g.clone()
        }
    };
    let mut spectrum = sorted_spectrum(&rom.a);
    let mut converged = false;
    let mut iterations = 0;
    let mut bases = None;
    while iterations < opts.maxit {
        iterations += 1;
        let (v, w) = irka_bases(sys, &rom, opts.dense_limit)?;
        rom = project(sys, &v, &w)?;
        bases = Some((v, w));
        let next = sorted_spectrum(&rom.a);
        let change = spectrum_change(&spectrum, &next);
        spectrum = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let stable = rom_stable(&rom)?;
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("no convergence within {} iterations", opts.maxit));
    }
    Ok(ReductionResult {
        rom,
        method: Method::Irka,
        transform: None,
        hsv_kept: Vec::new(),
        hsv_dropped: Vec::new(),
        iterations,
        converged,
        rom_mean_square_stable: stable,
        projection: bases,
        warnings,
    })
}

/// Relative residuals of the H2 first-order optimality conditions
/// `ĈP̂ = CP_g`, `Q̂B̂ = Q_gB`, `Q̂P̂ = Q_gP_g`, `Q̂N̂_kP̂ = Q_gN_kP_g`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptimalityResiduals {
    pub output: f64,
    pub input: f64,
    pub cross: f64,
    /// Maximum over `k`.
    pub bilinear: f64,
}

impl OptimalityResiduals {
    pub fn max(&self) -> f64 {
        self.output.max(self.input).max(self.cross).max(self.bilinear)
    }
}

fn rel_gap(lhs: &Mat, rhs: &Mat) -> f64 {
    let scale = lhs.norm().max(rhs.norm());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).norm() / scale
    }
}

pub fn optimality_residuals(full: &BilinearSystem, reduced: &BilinearSystem) -> Result<OptimalityResiduals> {
    let set = gramian_set(full, Some(reduced))?;
    let p_hat = set.p_hat.as_ref().expect("reduced Gramians requested");
    let q_hat = set.q_hat.as_ref().expect("reduced Gramians requested");
    let p_g = set.p_g.as_ref().expect("mixed Gramians requested");
    let q_g = set.q_g.as_ref().expect("mixed Gramians requested");
    let bilinear = full
        .n
        .iter()
        .zip(&reduced.n)
        .map(|(nk, nhk)| rel_gap(&(q_hat * nhk * p_hat), &(q_g * nk * p_g)))
        .fold(0.0, f64::max);
    Ok(OptimalityResiduals {
        output: rel_gap(&(&reduced.c * p_hat), &(&full.c * p_g)),
        input: rel_gap(&(q_hat * &reduced.b), &(q_g * &full.b)),
        cross: rel_gap(&(q_hat * p_hat), &(q_g * p_g)),
        bilinear,
    })
}

/// Checks that `S P Sᵀ` and `S⁻ᵀ Q S⁻¹` are `diag(hsv)` to a relative tolerance.
pub fn is_balanced(p: &Mat, q: &Mat, t: &BalancingTransform, rel_tol: f64) -> bool {
    let d = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&t.hsv));
    let scale = t.hsv.first().copied().unwrap_or(1.0);
    let pp = &t.s * p * t.s.transpose();
    let qq = t.s_inv.transpose() * q * &t.s_inv;
    (pp - &d).norm() <= rel_tol * scale && (qq - &d).norm() <= rel_tol * scale
}

/// Diagonal-Gramian check used by the weighted bounds: returns the Hankel
/// singular values when both Gramians are diagonal and equal.
pub fn balanced_hsv(p: &Mat, q: &Mat, rel_tol: f64) -> Result<Vec<f64>> {
    let n = p.nrows();
    let scale = (0..n).map(|i| p[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut off = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { p[(i, i)] } else { 0.0 };
            off = off.max((p[(i, j)] - target).abs()).max((q[(i, j)] - target).abs());
        }
    }
    if off > rel_tol * scale {
        return Err(Error::BalanceRequired(format!(
            "Gramians deviate from a common diagonal by {:.3e} (relative)",
            off / scale
        )));
    }
    Ok((0..n).map(|i| p[(i, i)]).collect())
}

/// Inverse of `WᵀV`, exposed for projection consistency checks.
pub fn projection_inverse(v: &Mat, w: &Mat) -> Result<Mat> {
    inverse(&(w.transpose() * v), "WᵀV").map_err(|_| Error::ProjectionBreakdown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> BilinearSystem {
        crate::benchgen::toy_system()
    }

    #[test]
    fn scalar_hsv() {
        let t = balance(&Mat::from_element(1, 1, 0.5), &Mat::from_element(1, 1, 0.5)).unwrap();
        assert!((t.hsv[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn already_balanced_is_signed_identity() {
        let d = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&[3.0, 2.0, 0.5]));
        let t = balance(&d, &d).unwrap();
        for (got, want) in t.hsv.iter().zip([3.0, 2.0, 0.5]) {
            assert!((got - want).abs() < 1e-13);
        }
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((t.s[(i, j)].abs() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_gramian_is_named() {
        let p = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.0, 0.0]));
        let q = Mat::identity(2, 2);
        assert!(matches!(balance(&p, &q), Err(Error::RankDeficient { which: "P", .. })));
    }

    #[test]
    fn toy_hsv_match_eigenvalues_of_pq() {
        let sys = toy();
        let set = gramian_set(&sys, None).unwrap();
        let t = balance(&set.p, &set.q).unwrap();
        let mut ev: Vec<f64> = crate::linalg::eigenvalues(&(&set.p * &set.q)).iter().map(|z| z.re.sqrt()).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in t.hsv.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-10 * ev[0]);
        }
        assert!(is_balanced(&set.p, &set.q, &t, 1e-8));
        assert!(((&t.s * &t.s_inv) - Mat::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn toy_bt_is_stable_and_spa_blocks_match_hand_assembly() {
        let sys = toy();
        let set = gramian_set(&sys, None).unwrap();
        let bt = balanced_truncation(&sys, 1, &set).unwrap();
        assert!(bt.rom_mean_square_stable);
        let spa = singular_perturbation(&sys, 1, &set).unwrap();
        let bal = balanced_realization(&sys, spa.transform.as_ref().unwrap());
        let x = bal.a[(1, 0)] / bal.a[(1, 1)];
        let n1 = &bal.n[0];
        assert!((spa.rom.n[0][(0, 0)] - (n1[(0, 0)] - n1[(0, 1)] * x)).abs() < 1e-12);
        assert!((spa.rom.a[(0, 0)] - (bal.a[(0, 0)] - bal.a[(0, 1)] * x)).abs() < 1e-12);
    }

    #[test]
    fn full_order_reductions_are_exact() {
        let sys = toy();
        let set = gramian_set(&sys, None).unwrap();
        for rom in [
            balanced_truncation(&sys, 2, &set).unwrap().rom,
            singular_perturbation(&sys, 2, &set).unwrap().rom,
        ] {
            assert!(crate::gramians::h2_error(&sys, &rom).unwrap() < 1e-7);
        }
        let res = optimality_residuals(&sys, &balanced_truncation(&sys, 2, &set).unwrap().rom).unwrap();
        assert!(res.max() < 1e-10, "{res:?}");
    }

    #[test]
    fn irka_fixed_point_at_full_order() {
        let sys = toy();
        let opts = IrkaOptions { init: IrkaInit::Given(sys.clone()), ..Default::default() };
        let res = bilinear_irka(&sys, 2, &opts).unwrap();
        assert!(res.converged && res.iterations <= 2);
        assert!(crate::gramians::h2_error(&sys, &res.rom).unwrap() < 1e-7);
    }

    #[test]
    fn unbalanced_gramians_are_rejected() {
        let p = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert!(matches!(balanced_hsv(&p, &p, 1e-6), Err(Error::BalanceRequired(_))));
    }
}
