//! Matrix-free Krylov and power iterations used by the large-scale solver path.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Outcome of a [`gmres`] run.
#[derive(Clone, Copy, Debug)]
pub struct GmresInfo {
    pub iterations: usize,
    /// Relative residual `‖b − M x‖ / ‖b‖` of the returned iterate.
    pub residual: f64,
}

/// Restarted GMRES for `M x = b` with `M` given as a closure.
pub fn gmres<F>(
    apply: F,
    b: &Vector,
    x0: Option<&Vector>,
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> Result<(Vector, GmresInfo)>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let dim = b.len();
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok((Vector::zeros(dim), GmresInfo { iterations: 0, residual: 0.0 }));
    }
    let mut x = x0.cloned().unwrap_or_else(|| Vector::zeros(dim));
    let mut total = 0;
    let restart = restart.max(1).min(dim.max(1));
    loop {
        let r = b - apply(&x)?;
        let beta = r.norm();
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok((x, GmresInfo { iterations: total, residual: rel }));
        }
        if total >= max_iter {
            return Err(Error::NoConvergence { iterations: total, residual: rel });
        }

        let mut basis: Vec<Vector> = Vec::with_capacity(restart + 1);
        basis.push(r / beta);
        // Hessenberg matrix stored column-wise, reduced on the fly by Givens rotations
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<f64> = Vec::with_capacity(restart);
        let mut sn: Vec<f64> = Vec::with_capacity(restart);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..restart {
            let mut w = apply(&basis[k])?;
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hik = w.dot(v);
                col[i] = hik;
                w.axpy(-hik, v, 1.0);
            }
            // one step of reorthogonalisation keeps the basis clean
            for (i, v) in basis.iter().enumerate() {
                let corr = w.dot(v);
                col[i] += corr;
                w.axpy(-corr, v, 1.0);
            }
            let wnorm = w.norm();
            col[k + 1] = wnorm;

            for i in 0..k {
                let tmp = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = tmp;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
            cs.push(c);
            sn.push(s);
            col[k] = denom;
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(col);
            k_used = k + 1;
            total += 1;

            if (g[k + 1].abs() / bnorm) <= tol || wnorm == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w / wnorm);
        }

        // back substitution on the triangular factor
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k_used {
                acc -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.axpy(*yi, v, 1.0);
        }
    }
}

/// Dominant eigenvalue modulus of a (cone-)positive operator by power
/// iteration, starting from `x0`.
///
/// Returns `(estimate, iterations)`. The iteration normalises with the
/// Euclidean norm and stops once successive estimates agree to `tol`.
pub fn power_iteration<F>(apply: F, x0: &Vector, tol: f64, max_iter: usize) -> Result<(f64, usize)>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let mut x = x0 / x0.norm();
    let mut est = 0.0;
    for it in 1..=max_iter {
        let y = apply(&x)?;
        let ny = y.norm();
        if ny == 0.0 {
            return Ok((0.0, it));
        }
        let prev = est;
        est = ny;
        x = y / ny;
        if it > 2 && (est - prev).abs() <= tol * est {
            return Ok((est, it));
        }
    }
    Ok((est, max_iter))
}
