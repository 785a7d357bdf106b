//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Kronecker product `a ⊗ b`.
pub fn kron<T: ComplexField + Copy>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::<T>::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == T::zero() {
                continue;
            }
            for l in 0..bc {
                for k in 0..br {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Column-stacking `vec` operator.
pub fn vec_of<T: ComplexField + Copy>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec<T: ComplexField + Copy>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Symmetric part `(m + mᵀ)/2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest real part over the spectrum of a square matrix.
pub fn spectral_abscissa(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::NEG_INFINITY;
    }
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvalues of a real square matrix, sorted by real part then imaginary part.
pub fn eigenvalues(m: &Mat) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = m.clone().complex_eigenvalues().iter().copied().collect();
    sort_spectrum(&mut ev);
    ev
}

pub fn sort_spectrum(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Ascending eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// `‖a − b‖_F / ‖b‖_F`, falling back to the absolute error when `b` vanishes.
pub fn rel_fro(a: &Mat, b: &Mat) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

/// Matrix exponential (Padé with scaling and squaring).
pub fn expm(m: &Mat) -> Mat {
    m.clone().exp()
}

/// Eigen-decomposition of a symmetric matrix as `(values, vectors)` with
/// values in descending order; ties keep their original relative order.
pub fn sym_eigen_desc(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    let se = SymmetricEigen::new(sym(m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Factor a symmetric positive (semi)definite matrix as `K Kᵀ`.
///
/// Eigenvalues above `-tol·λ_max` are clipped to zero. Returns the factor and
/// the ratio `λ_min / λ_max` of the clipped spectrum.
pub fn psd_factor(m: &Mat, tol: f64) -> Result<(Mat, f64)> {
    let n = m.nrows();
    let (vals, vecs) = sym_eigen_desc(m);
    let lmax = vals.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Ok((Mat::zeros(n, n), 0.0));
    }
    let lmin = vals.last().copied().unwrap_or(0.0);
    if lmin < -tol * lmax {
        return Err(Error::Inconsistent(format!(
            "matrix is indefinite: eigenvalue {lmin:.3e} below tolerance (max {lmax:.3e})"
        )));
    }
    let mut k = vecs;
    for (j, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        k.column_mut(j).scale_mut(s);
    }
    Ok((k, lmin.max(0.0) / lmax))
}

/// Solve `m x = rhs` by LU with partial pivoting, flagging numerically
/// singular systems.
pub fn lu_solve<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>, rhs: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut dmax = 0.0_f64;
    let mut dmin = f64::INFINITY;
    for i in 0..u.nrows() {
        let d = u[(i, i)].modulus();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if u.nrows() > 0 && (dmax == 0.0 || dmin <= 1e-14 * dmax) {
        return Err(Error::Singular(format!(
            "{what}: pivot ratio {:.3e}",
            if dmax > 0.0 { dmin / dmax } else { 0.0 }
        )));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::Singular(format!("{what}: LU solve failed")))
}

pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    lu_solve(m, &Mat::identity(m.nrows(), m.ncols()), what)
}

/// 2-norm condition number.
pub fn cond(m: &Mat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

/// Orthonormal basis for the dominant `rank`-dimensional column space of `m`.
pub fn orth(m: &Mat, rank: usize) -> Result<Mat> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    if rank > idx.len() {
        return Err(Error::Dimension(format!(
            "orth: requested rank {rank} exceeds {} columns",
            idx.len()
        )));
    }
    let smax = sv[idx[0]];
    let srank = sv[idx[rank - 1]];
    if smax == 0.0 || srank <= 1e-13 * smax {
        return Err(Error::Singular(format!(
            "orth: basis has numerical rank below {rank}"
        )));
    }
    let mut q = Mat::zeros(m.nrows(), rank);
    for (k, &i) in idx.iter().take(rank).enumerate() {
        q.set_column(k, &u.column(i));
    }
    Ok(q)
}

/// Eigenvalues and right eigenvectors of a small real matrix.
///
/// Eigenvectors are obtained as null vectors of `m − λI` through a complex SVD,
/// which is adequate for the reduced orders handled here.
pub fn complex_eigen(m: &Mat) -> (Vec<Complex64>, CMat) {
    let n = m.nrows();
    let ev = eigenvalues(m);
    let mc: CMat = m.map(|x| Complex64::new(x, 0.0));
    let mut x = CMat::zeros(n, n);
    for (j, &lambda) in ev.iter().enumerate() {
        let shifted = &mc - CMat::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let sv = &svd.singular_values;
        let imin = (0..sv.len()).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap_or(0);
        for i in 0..n {
            x[(i, j)] = vt[(imin, i)].conj();
        }
    }
    (ev, x)
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Block-diagonal assembly of two square matrices.
pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut out = Mat::zeros(n1 + n2, n1 + n2);
    out.view_mut((0, 0), (n1, n1)).copy_from(a);
    out.view_mut((n1, n1), (n2, n2)).copy_from(b);
    out
}
