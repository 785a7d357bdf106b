//! Generalized Lyapunov and Sylvester equations and mean-square stability tests.
//!
//! The generalized Sylvester operator is
//!
//! ```text
//! L(X) = A1 X + X A2ᵀ + Σ_k N1_k X N2_kᵀ
//! ```
//!
//! whose vectorization is `I ⊗ A1 + A2 ⊗ I + Σ_k N2_k ⊗ N1_k`. Small problems
//! are solved through that Kronecker matrix; larger ones by GMRES on the
//! Bartels–Stewart preconditioned operator `X + S⁻¹ Π(X)` with
//! `S(X) = A1 X + X A2ᵀ` and `Π(X) = Σ N1_k X N2_kᵀ`.

use nalgebra::linalg::Schur;
use nalgebra::{ComplexField, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{gmres, power_iteration};
use crate::linalg::{eigenvalues, kron, lu_solve, min_sym_eigenvalue, spectral_norm, sym, unvec, vec_of, Mat, Vector};
use crate::sysmodel::BilinearSystem;

/// Relative residual accepted without complaint.
pub const RESIDUAL_TARGET: f64 = 1e-10;
/// Relative residual above which a solve is reported as failed.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GramianSide {
    /// `A P + P Aᵀ + Σ N_k P N_kᵀ = −RHS`
    Reach,
    /// `Aᵀ Q + Q A + Σ N_kᵀ Q N_k = −RHS`
    Observe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMethod {
    DenseKronecker,
    SchurKrylov,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Largest number of unknowns `n1·n2` solved through the Kronecker matrix.
    pub dense_limit: usize,
    /// Overrides the size-based choice.
    pub method: Option<SolverMethod>,
    pub restart: usize,
    pub max_iter: usize,
    /// Relative tolerance of the preconditioned GMRES iteration.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dense_limit: 900,
            method: None,
            restart: 60,
            max_iter: 600,
            tol: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolveInfo {
    pub method: SolverMethod,
    pub iterations: usize,
    /// Relative residual, see [`sylvester_residual`].
    pub residual: f64,
}

fn check_shapes(a1: &Mat, a2: &Mat, n1: &[Mat], n2: &[Mat], rhs: &Mat) -> Result<()> {
    let (r, c) = (a1.nrows(), a2.nrows());
    let ok = a1.is_square()
        && a2.is_square()
        && rhs.shape() == (r, c)
        && n1.len() == n2.len()
        && n1.iter().all(|m| m.shape() == (r, r))
        && n2.iter().all(|m| m.shape() == (c, c));
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "generalized Sylvester operands inconsistent: A1 {:?}, A2 {:?}, RHS {:?}, {} / {} bilinear terms",
            a1.shape(),
            a2.shape(),
            rhs.shape(),
            n1.len(),
            n2.len()
        )))
    }
}

/// Applies `L(X) = A1 X + X A2ᵀ + Σ N1_k X N2_kᵀ`, generic over the scalar.
pub fn sylvester_apply<T: ComplexField + Copy>(
    a1: &DMatrix<T>,
    a2: &DMatrix<T>,
    n1: &[DMatrix<T>],
    n2: &[DMatrix<T>],
    x: &DMatrix<T>,
) -> DMatrix<T> {
    let mut out = a1 * x + x * a2.transpose();
    for (p, q) in n1.iter().zip(n2) {
        out += p * x * q.transpose();
    }
    out
}

/// Scaled residual `‖L(X) − RHS‖_F / (‖RHS‖_F + ‖X‖_F (‖A1‖_F + ‖A2‖_F + Σ‖N1_k‖_F‖N2_k‖_F))`.
pub fn sylvester_residual<T: ComplexField<RealField = f64> + Copy>(
    a1: &DMatrix<T>,
    a2: &DMatrix<T>,
    n1: &[DMatrix<T>],
    n2: &[DMatrix<T>],
    x: &DMatrix<T>,
    rhs: &DMatrix<T>,
) -> f64 {
    let r = (sylvester_apply(a1, a2, n1, n2, x) - rhs).norm();
    let op: f64 = a1.norm() + a2.norm() + n1.iter().zip(n2).map(|(p, q)| p.norm() * q.norm()).sum::<f64>();
    let scale = rhs.norm() + x.norm() * op;
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

/// Kronecker matrix `I ⊗ A1 + A2 ⊗ I + Σ N2_k ⊗ N1_k` of the generalized
/// Sylvester operator.
pub fn kron_operator<T: ComplexField + Copy>(
    a1: &DMatrix<T>,
    a2: &DMatrix<T>,
    n1: &[DMatrix<T>],
    n2: &[DMatrix<T>],
) -> DMatrix<T> {
    let i1 = DMatrix::<T>::identity(a1.nrows(), a1.nrows());
    let i2 = DMatrix::<T>::identity(a2.nrows(), a2.nrows());
    let mut k = kron(&i2, a1) + kron(a2, &i1);
    for (p, q) in n1.iter().zip(n2) {
        k += kron(q, p);
    }
    k
}

/// Dense solve of `L(X) = RHS` through the vectorized operator, followed by
/// one step of iterative refinement.
pub fn sylvester_dense<T: ComplexField<RealField = f64> + Copy>(
    a1: &DMatrix<T>,
    a2: &DMatrix<T>,
    n1: &[DMatrix<T>],
    n2: &[DMatrix<T>],
    rhs: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let (r, c) = (a1.nrows(), a2.nrows());
    let k = kron_operator(a1, a2, n1, n2);
    let lu = k.clone().lu();
    let b = DMatrix::from_column_slice(r * c, 1, rhs.as_slice());
    // reuse lu_solve's pivot check for the singularity diagnosis
    let x = lu_solve(&k, &b, "generalized Sylvester operator")?;
    let res = &b - &k * &x;
    let x = match lu.solve(&res) {
        Some(d) => x + d,
        None => x,
    };
    Ok(DMatrix::from_column_slice(r, c, x.as_slice()))
}

/// Real Schur factorizations of `A1` and `A2` for repeated solves of
/// `A1 X + X A2ᵀ = F` (Bartels–Stewart).
#[derive(Clone, Debug)]
pub struct SylvesterSchur {
    u: Mat,
    t1: Mat,
    blocks1: Vec<(usize, usize)>,
    v: Mat,
    t2: Mat,
    blocks2: Vec<(usize, usize)>,
}

fn real_schur(a: &Mat) -> Result<(Mat, Mat)> {
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or(Error::NoConvergence { iterations: 100_000, residual: f64::NAN })?;
    Ok(schur.unpack())
}

/// Diagonal blocks `(start, len)` of a quasi-triangular matrix.
fn diagonal_blocks(t: &Mat) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves the small dense Sylvester problem `T X + X Sᵀ = H` with `T, S` at most 2×2.
fn small_sylvester(t: &Mat, s: &Mat, h: &Mat) -> Result<Mat> {
    let (p, q) = (t.nrows(), s.nrows());
    let k = kron(&Mat::identity(q, q), t) + kron(s, &Mat::identity(p, p));
    let x = lu_solve(&k, &Mat::from_column_slice(p * q, 1, h.as_slice()), "Sylvester operator (common eigenvalues)")?;
    Ok(Mat::from_column_slice(p, q, x.as_slice()))
}

impl SylvesterSchur {
    pub fn new(a1: &Mat, a2: &Mat) -> Result<Self> {
        let (u, t1) = real_schur(a1)?;
        let (v, t2) = if a1 == a2 {
            (u.clone(), t1.clone())
        } else {
            real_schur(a2)?
        };
        let blocks1 = diagonal_blocks(&t1);
        let blocks2 = diagonal_blocks(&t2);
        Ok(SylvesterSchur { u, t1, blocks1, v, t2, blocks2 })
    }

    /// Eigenvalue real parts read from the quasi-triangular factor of `A1`.
    pub fn abscissa1(&self) -> f64 {
        self.blocks1
            .iter()
            .map(|&(s, l)| {
                if l == 1 {
                    self.t1[(s, s)]
                } else {
                    0.5 * (self.t1[(s, s)] + self.t1[(s + 1, s + 1)])
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Solves `A1 X + X A2ᵀ = F`.
    pub fn solve(&self, f: &Mat) -> Result<Mat> {
        let rows = self.t1.nrows();
        let g = self.u.transpose() * f * &self.v;
        let mut y = Mat::zeros(rows, self.t2.nrows());
        for &(qs, ql) in self.blocks2.iter().rev() {
            let qe = qs + ql;
            let mut rhs = g.columns(qs, ql).into_owned();
            let tail = self.t2.ncols() - qe;
            if tail > 0 {
                rhs -= y.columns(qe, tail) * self.t2.view((qs, qe), (ql, tail)).transpose();
            }
            let s_qq = self.t2.view((qs, qs), (ql, ql)).into_owned();
            let mut z = Mat::zeros(rows, ql);
            for &(ps, pl) in self.blocks1.iter().rev() {
                let pe = ps + pl;
                let mut h = rhs.rows(ps, pl).into_owned();
                let tail = rows - pe;
                if tail > 0 {
                    h -= self.t1.view((ps, pe), (pl, tail)) * z.rows(pe, tail);
                }
                let t_pp = self.t1.view((ps, ps), (pl, pl)).into_owned();
                let blk = small_sylvester(&t_pp, &s_qq, &h)?;
                z.rows_mut(ps, pl).copy_from(&blk);
            }
            y.columns_mut(qs, ql).copy_from(&z);
        }
        Ok(&self.u * y * self.v.transpose())
    }
}

/// Solves `A1 X + X A2ᵀ + Σ N1_k X N2_kᵀ = RHS` with default options.
pub fn solve_generalized_sylvester(a1: &Mat, a2: &Mat, n1: &[Mat], n2: &[Mat], rhs: &Mat) -> Result<Mat> {
    solve_generalized_sylvester_with(a1, a2, n1, n2, rhs, &SolverOptions::default()).map(|(x, _)| x)
}

pub fn solve_generalized_sylvester_with(
    a1: &Mat,
    a2: &Mat,
    n1: &[Mat],
    n2: &[Mat],
    rhs: &Mat,
    opts: &SolverOptions,
) -> Result<(Mat, SolveInfo)> {
    check_shapes(a1, a2, n1, n2, rhs)?;
    let unknowns = a1.nrows() * a2.nrows();
    let method = opts.method.unwrap_or(if unknowns <= opts.dense_limit {
        SolverMethod::DenseKronecker
    } else {
        SolverMethod::SchurKrylov
    });
    let (x, iterations) = match method {
        SolverMethod::DenseKronecker => (sylvester_dense(a1, a2, n1, n2, rhs)?, 1),
        SolverMethod::SchurKrylov => {
            let schur = SylvesterSchur::new(a1, a2)?;
            schur_krylov(&schur, a1, a2, n1, n2, rhs, opts)?
        }
    };
    let residual = sylvester_residual(a1, a2, n1, n2, &x, rhs);
    if !(residual <= RESIDUAL_LIMIT) {
        return Err(Error::Singular(format!(
            "generalized Sylvester solve left relative residual {residual:.3e}"
        )));
    }
    Ok((x, SolveInfo { method, iterations, residual }))
}

fn schur_krylov(
    schur: &SylvesterSchur,
    a1: &Mat,
    a2: &Mat,
    n1: &[Mat],
    n2: &[Mat],
    rhs: &Mat,
    opts: &SolverOptions,
) -> Result<(Mat, usize)> {
    let (r, c) = (a1.nrows(), a2.nrows());
    let x0 = schur.solve(rhs)?;
    let active: Vec<(&Mat, &Mat)> = n1.iter().zip(n2).filter(|(p, q)| p.norm() > 0.0 && q.norm() > 0.0).collect();
    if active.is_empty() {
        return Ok((x0, 0));
    }
    let apply = |v: &Vector| -> Result<Vector> {
        let x = unvec(v, r, c);
        let mut pi = Mat::zeros(r, c);
        for (p, q) in &active {
            pi += *p * &x * q.transpose();
        }
        Ok(v + vec_of(&schur.solve(&pi)?))
    };
    let b = vec_of(&x0);
    let (mut v, info) = gmres(apply, &b, Some(&b), opts.restart, opts.max_iter, opts.tol)?;
    let mut iterations = info.iterations;
    // one refinement sweep against the unpreconditioned residual
    let x = unvec(&v, r, c);
    let res = rhs - sylvester_apply(a1, a2, n1, n2, &x);
    if sylvester_residual(a1, a2, n1, n2, &x, rhs) > RESIDUAL_TARGET * 1e-2 {
        let rb = vec_of(&schur.solve(&res)?);
        if let Ok((d, info2)) = gmres(apply, &rb, None, opts.restart, opts.max_iter, opts.tol) {
            v += d;
            iterations += info2.iterations;
        }
    }
    Ok((unvec(&v, r, c), iterations))
}

fn lyapunov_operands(a: &Mat, n: &[Mat], side: GramianSide) -> (Mat, Vec<Mat>) {
    match side {
        GramianSide::Reach => (a.clone(), n.to_vec()),
        GramianSide::Observe => (a.transpose(), n.iter().map(|m| m.transpose()).collect()),
    }
}

/// Solves the reachability (`side = Reach`) or observability generalized
/// Lyapunov equation with right-hand side `−RHS` for a symmetric PSD `RHS`.
///
/// Mean-square stability is certified first; the solution is symmetrized.
pub fn solve_generalized_lyapunov(a: &Mat, n: &[Mat], rhs: &Mat, side: GramianSide) -> Result<Mat> {
    solve_generalized_lyapunov_with(a, n, rhs, side, &SolverOptions::default()).map(|(x, _)| x)
}

pub fn solve_generalized_lyapunov_with(
    a: &Mat,
    n: &[Mat],
    rhs: &Mat,
    side: GramianSide,
    opts: &SolverOptions,
) -> Result<(Mat, SolveInfo)> {
    let (aa, nn) = lyapunov_operands(a, n, side);
    if !ms_certificate(&aa, &nn, opts)? {
        return Err(Error::NotMeanSquareStable(
            "generalized Lyapunov operator has eigenvalues in the closed right half-plane".into(),
        ));
    }
    let (x, mut info) = solve_generalized_sylvester_with(&aa, &aa, &nn, &nn, &(-rhs), opts)?;
    let x = sym(&x);
    info.residual = sylvester_residual(&aa, &aa, &nn, &nn, &x, &(-rhs));
    Ok((x, info))
}

/// Mean-square stability certificate: `A` Hurwitz and the solution of
/// `A X + X Aᵀ + Σ N_k X N_kᵀ = −I` positive definite.
fn ms_certificate(a: &Mat, n: &[Mat], opts: &SolverOptions) -> Result<bool> {
    let dim = a.nrows();
    if dim == 0 {
        return Ok(true);
    }
    let schur = SylvesterSchur::new(a, a)?;
    if !(schur.abscissa1() < 0.0) {
        return Ok(false);
    }
    let rhs = -Mat::identity(dim, dim);
    let x = match solve_generalized_sylvester_with(a, a, n, n, &rhs, opts) {
        Ok((x, _)) => x,
        Err(Error::Singular(_)) | Err(Error::NoConvergence { .. }) => return Ok(false),
        Err(e) => return Err(e),
    };
    Ok(min_sym_eigenvalue(&x) > 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityMethod {
    /// Eigenvalues of the assembled `n²×n²` Kronecker matrix.
    DenseKronecker,
    /// Positive-definite Lyapunov certificate plus a power-iteration
    /// estimate of `ρ(S⁻¹Π)`.
    Certificate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub hurwitz: bool,
    pub spectral_abscissa_a: f64,
    /// Largest real part of `A⊗I + I⊗A + Σ N_k⊗N_k` (dense method only).
    pub kron_abscissa: Option<f64>,
    /// Spectral radius of `X ↦ −S⁻¹(Σ N_k X N_kᵀ)`; mean-square stability
    /// holds iff `A` is Hurwitz and this is below one.
    pub spectral_radius: Option<f64>,
    /// `‖X‖₂` with `A X + X Aᵀ = −Σ N_k N_kᵀ`; values below one suffice for
    /// mean-square stability.
    pub sufficient_margin: Option<f64>,
    pub mean_square_stable: bool,
    pub method: StabilityMethod,
}

#[derive(Clone, Debug)]
pub struct StabilityOptions {
    /// Largest `n` for which the Kronecker spectrum is computed densely.
    pub dense_cap: usize,
    /// Largest `n` accepted at all.
    pub size_cap: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions { dense_cap: 20, size_cap: 1500 }
    }
}

pub fn kron_stability(sys: &BilinearSystem) -> Result<StabilityReport> {
    kron_stability_with(sys, &StabilityOptions::default())
}

pub fn kron_stability_with(sys: &BilinearSystem, opts: &StabilityOptions) -> Result<StabilityReport> {
    let n = sys.state_dim();
    if n > opts.size_cap {
        return Err(Error::SizeCap { size: n, cap: opts.size_cap });
    }
    let spec_a = eigenvalues(&sys.a);
    let abscissa = spec_a.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let hurwitz = abscissa < 0.0;

    let sufficient_margin = if hurwitz {
        let mut nn_t = Mat::zeros(n, n);
        for nk in &sys.n {
            nn_t += nk * nk.transpose();
        }
        let schur = SylvesterSchur::new(&sys.a, &sys.a)?;
        Some(spectral_norm(&sym(&schur.solve(&(-nn_t))?)))
    } else {
        None
    };
    let spectral_radius = if hurwitz { Some(ms_spectral_radius(sys)?) } else { None };

    if n <= opts.dense_cap {
        let k = kron_operator(&sys.a, &sys.a, &sys.n, &sys.n);
        let kron_abscissa = eigenvalues(&k).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        Ok(StabilityReport {
            hurwitz,
            spectral_abscissa_a: abscissa,
            kron_abscissa: Some(kron_abscissa),
            spectral_radius,
            sufficient_margin,
            mean_square_stable: kron_abscissa < 0.0,
            method: StabilityMethod::DenseKronecker,
        })
    } else {
        let stable = hurwitz && ms_certificate(&sys.a, &sys.n, &SolverOptions::default())?;
        Ok(StabilityReport {
            hurwitz,
            spectral_abscissa_a: abscissa,
            kron_abscissa: None,
            spectral_radius,
            sufficient_margin,
            mean_square_stable: stable,
            method: StabilityMethod::Certificate,
        })
    }
}

/// Spectral radius `ρ` of `X ↦ −S⁻¹(Σ N_k X N_kᵀ)` for Hurwitz `A`.
///
/// The map preserves the PSD cone, so power iteration from the identity
/// converges to its Perron root. The rescaled system with factor `γ` has
/// radius `ρ/γ²`.
pub fn ms_spectral_radius(sys: &BilinearSystem) -> Result<f64> {
    let n = sys.state_dim();
    if sys.is_linear() || n == 0 {
        return Ok(0.0);
    }
    let schur = SylvesterSchur::new(&sys.a, &sys.a)?;
    let abscissa = schur.abscissa1();
    if !(abscissa < 0.0) {
        return Err(Error::NotHurwitz { abscissa });
    }
    let apply = |v: &Vector| -> Result<Vector> {
        let x = unvec(v, n, n);
        let mut pi = Mat::zeros(n, n);
        for nk in &sys.n {
            pi += nk * &x * nk.transpose();
        }
        Ok(-vec_of(&sym(&schur.solve(&pi)?)))
    };
    let x0 = vec_of(&Mat::identity(n, n));
    let (rho, _) = power_iteration(apply, &x0, 1e-12, 20_000)?;
    Ok(rho)
}

/// Smallest `γ` for which the rescaled system is mean-square stable
/// (the infimum; any strictly larger value works).
pub fn ms_gamma_threshold(sys: &BilinearSystem) -> Result<f64> {
    Ok(ms_spectral_radius(sys)?.sqrt())
}
