//! Benchmark systems: the two-state toy example with its control, a 2D heat
//! equation with Robin/Dirichlet boundary control, and seeded random systems.
//!
//! # Heat equation discretization
//!
//! The unit square carries an `ñ×ñ` interior mesh with width `h = 1/(ñ+1)`;
//! node `(i, j)` (`i` along x, `j` along y) has state index `i·ñ + j`.
//! The 5-point Laplacian is scaled by `1/h²`. On the left edge (`Γ₁`,
//! `i = 0`) the Robin condition `∂X/∂n = u₁ (X − 1)` is imposed with a
//! one-sided difference through the ghost node
//! `X_ghost = X₀ + h·u₁·(X₀ − 1)`, which contributes `+1/h²` to the
//! diagonal, `1/h` to `N₁` and `−1/h` to the first input column. The right
//! edge (`Γ₂`, `i = ñ−1`) carries the Dirichlet value `u₂`, entering the
//! second input column with weight `1/h²`. Top and bottom edges are
//! homogeneous Dirichlet. The output is the mean temperature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{spectral_abscissa, Mat, Vector};
use crate::lyapunov::{kron_stability, ms_spectral_radius};
use crate::quad::adaptive_simpson;
use crate::sysmodel::{BilinearSystem, ControlSignal};

/// The two-state example `A = [[-2, 1], [1, -2]]`, `N₁ = [[0, 1], [0.5, 0]]`,
/// `N₂ = 0`, `B = I`, `C = [1, 1]`.
pub fn toy_system() -> BilinearSystem {
    BilinearSystem {
        a: Mat::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]),
        b: Mat::identity(2, 2),
        c: Mat::from_row_slice(1, 2, &[1.0, 1.0]),
        n: vec![Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]), Mat::zeros(2, 2)],
    }
}

fn raw_control(t: f64) -> Vector {
    Vector::from_column_slice(&[(-t).exp(), (std::f64::consts::PI * t).sin() * t.exp()])
}

/// `‖ū‖_{L²}` of `ū(t) = (e^{−t}, sin(πt)eᵗ)` on `[0, 1]`.
pub fn raw_control_norm() -> f64 {
    adaptive_simpson(|t| raw_control(t).norm_squared(), 0.0, 1.0, 1e-13).sqrt()
}

/// `α ū(t)/‖ū‖_{L²}` on `[0, 1]`, zero afterwards; its L² norm is `α`.
pub fn toy_control(alpha: f64) -> Result<ControlSignal> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("control amplitude must be nonnegative, got {alpha}")));
    }
    let scale = alpha / raw_control_norm();
    Ok(ControlSignal::from_fn(2, 1.0, move |t| raw_control(t) * scale))
}

/// Generated heat benchmark together with its mesh parameters.
#[derive(Clone, Debug)]
pub struct HeatBenchSpec {
    pub nn: usize,
    pub h: f64,
    pub system: BilinearSystem,
}

/// Finite-difference heat equation on an `ñ×ñ` interior mesh (see module docs).
pub fn heat2d(nn: usize) -> Result<HeatBenchSpec> {
    if nn < 2 {
        return Err(Error::InvalidParameter(format!("mesh size must be at least 2, got {nn}")));
    }
    let n = nn * nn;
    let h = 1.0 / (nn as f64 + 1.0);
    let inv_h2 = 1.0 / (h * h);
    let idx = |i: usize, j: usize| i * nn + j;
    let mut a = Mat::zeros(n, n);
    let mut n1 = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, 2);
    for i in 0..nn {
        for j in 0..nn {
            let k = idx(i, j);
            a[(k, k)] = -4.0 * inv_h2;
            if i > 0 {
                a[(k, idx(i - 1, j))] = inv_h2;
            }
            if i + 1 < nn {
                a[(k, idx(i + 1, j))] = inv_h2;
            }
            if j > 0 {
                a[(k, idx(i, j - 1))] = inv_h2;
            }
            if j + 1 < nn {
                a[(k, idx(i, j + 1))] = inv_h2;
            }
            if i == 0 {
                a[(k, k)] += inv_h2;
                n1[(k, k)] = 1.0 / h;
                b[(k, 0)] = -1.0 / h;
            }
            if i + 1 == nn {
                b[(k, 1)] = inv_h2;
            }
        }
    }
    let c = Mat::from_element(1, n, 1.0 / n as f64);
    let system = BilinearSystem { a, b, c, n: vec![n1, Mat::zeros(n, n)] };
    Ok(HeatBenchSpec { nn, h, system })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilityTarget {
    Hurwitz,
    MeanSquare,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random system with `A = R − (α(R) + 0.5) I` for a standard normal `R`.
///
/// For the mean-square target the bilinear matrices are halved until the
/// Kronecker test passes. Deterministic in `seed`.
pub fn random_stable_system(n: usize, m: usize, p: usize, seed: u64, target: StabilityTarget) -> Result<BilinearSystem> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidParameter("dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = normal_matrix(&mut rng, n, n);
    let shift = spectral_abscissa(&r) + 0.5;
    let a = r - Mat::identity(n, n) * shift;
    let b = normal_matrix(&mut rng, n, m);
    let c = normal_matrix(&mut rng, p, n);
    let scale = 1.0 / (n as f64).sqrt();
    let nk: Vec<Mat> = (0..m).map(|_| normal_matrix(&mut rng, n, n) * scale).collect();
    let mut sys = BilinearSystem::new(a, b, c, nk)?;
    if target == StabilityTarget::MeanSquare {
        let mut guard = 0;
        while !kron_stability(&sys)?.mean_square_stable {
            for nk in sys.n.iter_mut() {
                *nk *= 0.5;
            }
            guard += 1;
            if guard > 60 {
                return Err(Error::Inconsistent("could not reach mean-square stability".into()));
            }
        }
    }
    Ok(sys)
}

/// Random system whose bilinear part is scaled so that the mean-square
/// spectral radius `ρ` equals `rho` (stable iff `rho < 1`).
pub fn random_system_with_radius(n: usize, m: usize, p: usize, seed: u64, rho: f64) -> Result<BilinearSystem> {
    let mut sys = random_stable_system(n, m, p, seed, StabilityTarget::Hurwitz)?;
    let current = ms_spectral_radius(&sys)?;
    if current > 0.0 {
        let s = (rho / current).sqrt();
        for nk in sys.n.iter_mut() {
            *nk *= s;
        }
    }
    Ok(sys)
}
