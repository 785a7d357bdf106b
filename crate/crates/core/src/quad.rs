//! Adaptive Simpson quadrature.

/// Adaptive Simpson rule on `[a, b]` with relative tolerance `rel_tol`
/// (measured against the magnitude of a coarse estimate of the integral).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // start from a modest uniform partition so oscillatory integrands are sampled
    const PIECES: usize = 16;
    let h = (b - a) / PIECES as f64;
    let mut coarse = 0.0;
    let mut pieces = Vec::with_capacity(PIECES);
    for i in 0..PIECES {
        let x0 = a + h * i as f64;
        let x1 = if i + 1 == PIECES { b } else { x0 + h };
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        coarse += s.abs();
        pieces.push((x0, x1, f0, fm, f1, s));
    }
    let abs_tol = (rel_tol * coarse).max(f64::MIN_POSITIVE);
    pieces
        .into_iter()
        .map(|(x0, x1, f0, fm, f1, s)| refine(&f, x0, x1, f0, fm, f1, s, abs_tol / PIECES as f64, 50))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// [`adaptive_simpson`] applied separately between consecutive breakpoints,
/// for integrands with jumps.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64], rel_tol: f64) -> f64 {
    let mut cuts = vec![a];
    cuts.extend(breakpoints.iter().copied().filter(|&t| t > a && t < b));
    cuts.push(b);
    cuts.windows(2)
        .map(|w| {
            // pull the ends inward by a hair so one-sided limits are sampled
            let eps = 1e-14 * (w[1] - w[0]).max(1.0);
            adaptive_simpson(&f, w[0], w[1] - eps, rel_tol)
        })
        .sum()
}
