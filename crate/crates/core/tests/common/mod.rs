//! Test-side oracles. Everything here is assembled from explicit index loops
//! and solved with a full-pivoting LU, independently of the library solvers.
#![allow(dead_code)]

use bilimor::linalg::Mat;
use bilimor::sysmodel::BilinearSystem;
use nalgebra::{DMatrix, DVector};

/// Matrix of `X ↦ A1 X + X A2ᵀ + Σ N1_k X N2_kᵀ` acting on the column-major
/// vectorization, entry by entry.
pub fn sylvester_matrix(a1: &Mat, a2: &Mat, n1: &[Mat], n2: &[Mat]) -> Mat {
    let (p, q) = (a1.nrows(), a2.nrows());
    let idx = |i: usize, j: usize| i + j * p;
    let mut m = Mat::zeros(p * q, p * q);
    for i in 0..p {
        for j in 0..q {
            let row = idx(i, j);
            for l in 0..p {
                m[(row, idx(l, j))] += a1[(i, l)];
            }
            for l in 0..q {
                m[(row, idx(i, l))] += a2[(j, l)];
            }
            for (k1, k2) in n1.iter().zip(n2) {
                for l in 0..p {
                    for s in 0..q {
                        m[(row, idx(l, s))] += k1[(i, l)] * k2[(j, s)];
                    }
                }
            }
        }
    }
    m
}

pub fn solve_sylvester(a1: &Mat, a2: &Mat, n1: &[Mat], n2: &[Mat], rhs: &Mat) -> Mat {
    let m = sylvester_matrix(a1, a2, n1, n2);
    let b = DVector::from_column_slice(rhs.as_slice());
    let x = m.full_piv_lu().solve(&b).expect("oracle operator singular");
    DMatrix::from_column_slice(rhs.nrows(), rhs.ncols(), x.as_slice())
}

pub fn reach_gramian(sys: &BilinearSystem) -> Mat {
    solve_sylvester(&sys.a, &sys.a, &sys.n, &sys.n, &(-&sys.b * sys.b.transpose()))
}

pub fn observe_gramian(sys: &BilinearSystem) -> Mat {
    let at = sys.a.transpose();
    let nt: Vec<Mat> = sys.n.iter().map(|m| m.transpose()).collect();
    solve_sylvester(&at, &at, &nt, &nt, &(-sys.c.transpose() * &sys.c))
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut m = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut(a.shape(), b.shape()).copy_from(b);
    m
}

/// `tr(Cᵉ Pᵉ Cᵉᵀ)` of the error system, assembled here from blocks.
pub fn error_system_h2_sq(full: &BilinearSystem, red: &BilinearSystem) -> f64 {
    let a = block_diag(&full.a, &red.a);
    let mut b = Mat::zeros(full.state_dim() + red.state_dim(), full.input_dim());
    b.rows_mut(0, full.state_dim()).copy_from(&full.b);
    b.rows_mut(full.state_dim(), red.state_dim()).copy_from(&red.b);
    let mut c = Mat::zeros(full.output_dim(), full.state_dim() + red.state_dim());
    c.columns_mut(0, full.state_dim()).copy_from(&full.c);
    c.columns_mut(full.state_dim(), red.state_dim()).copy_from(&(-&red.c));
    let n: Vec<Mat> = full.n.iter().zip(&red.n).map(|(x, y)| block_diag(x, y)).collect();
    let p = solve_sylvester(&a, &a, &n, &n, &(-&b * b.transpose()));
    (&c * p * c.transpose()).trace()
}

/// Largest real part of the spectrum of the Kronecker operator.
pub fn kron_abscissa(sys: &BilinearSystem) -> f64 {
    let m = sylvester_matrix(&sys.a, &sys.a, &sys.n, &sys.n);
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn mat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}

pub fn scalar_system(a: f64, b: f64, c: f64, n: f64) -> BilinearSystem {
    let s = |x| Mat::from_element(1, 1, x);
    BilinearSystem::new(s(a), s(b), s(c), vec![s(n)]).unwrap()
}

/// Toy Gramians and derived quantities, computed offline with an
/// independent dense Kronecker solve in double precision.
pub mod toy {
    pub const P: [f64; 4] = [0.4778156996587031, 0.2525597269624573, 0.2525597269624573, 0.40614334470989755];
    pub const Q: [f64; 4] = [0.6382252559726962, 0.6825938566552902, 0.6825938566552902, 0.7508532423208192];
    pub const HSV: [f64; 2] = [0.976157800032495, 0.04260844994644397];
    pub const H2_NORM: f64 = 1.1785917436896949;
    pub const KRON_ABSCISSA: f64 = -1.4593049980495536;
    pub const SUFFICIENT_MARGIN: f64 = 0.3484752504903511;
    pub const GAMMA_THRESHOLD: f64 = 0.7071067811865478;
    /// Order-1 BT model: `Â`, `N̂₁` (coordinate independent) and `Ĉ B̂`.
    pub const BT_A: f64 = -0.9966966325887149;
    pub const BT_N1: f64 = 0.7321402951379643;
    pub const BT_CB: [f64; 2] = [0.960977222864644, 1.04232614454664];
    pub const BT_H2_ERR_SQ: f64 = 0.009969446392390502;
    pub const SPA_A: f64 = -0.998900088666656;
    pub const SPA_N1: f64 = 0.7372816926531603;
    pub const SPA_H2_ERR_SQ: f64 = 0.009969617503062356;
}

/// Mean-square spectral radius of the `ñ = 10` heat model, computed offline by
/// power iteration over dense Lyapunov solves.
pub const HEAT10_MS_RADIUS: f64 = 0.8979134067010056;
