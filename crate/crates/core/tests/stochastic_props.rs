mod common;

use bilimor::benchgen::{toy_control, random_system_with_radius, toy_system};
use bilimor::linalg::{Mat, Vector};
use bilimor::simulate::{decay_envelope_check, uniform_grid};
use bilimor::stochastic::{
    bilinear_stochastic_domination, decay_fit, decay_rate_estimate, moment_check, simulate_sde, MomentSource,
};
use bilimor::sysmodel::BilinearSystem;
use bilimor::Error;
use common::scalar_system;
use proptest::prelude::*;

/// Exact second moment of the Euler–Maruyama chain:
/// `Z ← Z + h(AZ + ZAᵀ) + h²AZAᵀ + h Σ N_k Z N_kᵀ`.
fn em_moment(sys: &BilinearSystem, z0: &Mat, h: f64, steps: usize) -> Mat {
    let mut z = z0.clone();
    for _ in 0..steps {
        let az = &sys.a * &z;
        let mut next = &z + (&az + az.transpose()) * h + &az * sys.a.transpose() * (h * h);
        for nk in &sys.n {
            next += nk * &z * nk.transpose() * h;
        }
        z = next;
    }
    z
}

#[test]
fn scalar_closed_form_within_three_standard_errors() {
    for c in [0.5, 1.0] {
        let sys = scalar_system(-1.0, 1.0, 1.0, c);
        let grid = uniform_grid(1.0, 1e-3);
        let mp = simulate_sde(&sys, &Vector::from_element(1, 1.0), &grid, 10_000, 11).unwrap();
        let exact = ((-2.0 + c * c) * 1.0f64).exp();
        let se = mp.outer_std().last().unwrap() / (mp.retained() as f64).sqrt();
        let got = mp.moments.last().unwrap()[(0, 0)];
        assert!((got - exact).abs() <= 3.0 * se, "c {c}: {got} vs {exact} (se {se})");
    }
}

#[test]
fn toy_moment_check_passes() {
    let chk = moment_check(&toy_system(), &Vector::from_column_slice(&[1.0, 1.0]), &uniform_grid(1.0, 1e-3), 4000, 5).unwrap();
    assert!(chk.pass, "deviation {} tolerance {}", chk.deviation, chk.tolerance);
}

#[test]
fn monte_carlo_error_shrinks_like_inverse_root() {
    let sys = toy_system();
    let x0 = Vector::from_column_slice(&[1.0, 1.0]);
    let grid = uniform_grid(0.5, 1e-3);
    let exact = em_moment(&sys, &(&x0 * x0.transpose()), 1e-3, 500);
    let mean_err = |paths: usize| -> f64 {
        (0..6u64)
            .map(|s| (simulate_sde(&sys, &x0, &grid, paths, 100 + s).unwrap().moments.last().unwrap() - &exact).norm())
            .sum::<f64>()
            / 6.0
    };
    let ratio = mean_err(500) / mean_err(4500);
    // ideal ratio is 3
    assert!((1.8..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn toy_decay_envelope_dominates() {
    let sys = toy_system();
    let x0 = Vector::from_column_slice(&[1.0, -1.0]);
    let fit = decay_fit(&sys, &x0, 6.0, 2000, 3).unwrap();
    assert!(fit.k2 > 0.0 && fit.k1 >= 1.0 - 1e-12);
    let u = toy_control(1.0).unwrap();
    assert!(decay_envelope_check(&sys, &u, &x0, 1.0, fit.k1, fit.k2, &uniform_grid(6.0, 1e-2)).unwrap());
}

#[test]
fn decay_fit_refuses_unstable_systems() {
    let sys = scalar_system(-1.0, 1.0, 1.0, 2.0);
    let err = decay_fit(&sys, &Vector::from_element(1, 1.0), 2.0, 100, 1).unwrap_err();
    assert!(matches!(err, Error::NotMeanSquareStable(_)));
    let est = decay_rate_estimate(&sys, &Vector::from_element(1, 1.0), 4.0, 2e-3, 4000, 1).unwrap();
    // E z² grows like e^{2t}
    assert!((est.k2 + 2.0).abs() < 0.6, "{}", est.k2);
}

#[test]
fn stochastic_domination_from_both_sources() {
    let sys = toy_system();
    let u = toy_control(2.0).unwrap();
    let x0 = Vector::from_column_slice(&[0.5, 1.0]);
    let grid = uniform_grid(1.0, 1e-3);
    assert!(bilinear_stochastic_domination(&sys, &u, &x0, &grid, MomentSource::Exact).unwrap().holds(1e-6));
    let mc = bilinear_stochastic_domination(&sys, &u, &x0, &grid, MomentSource::MonteCarlo { paths: 4000, seed: 2 }).unwrap();
    // sampling error allows a small violation
    assert!(mc.holds(0.05), "{}", mc.min_margin());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn seeded_runs_are_reproducible(n in 1usize..=3, seed in any::<u64>()) {
        let sys = random_system_with_radius(n, 2, 1, seed, 0.7).unwrap();
        let x0 = Vector::from_element(n, 1.0);
        let grid = uniform_grid(0.2, 1e-2);
        let a = simulate_sde(&sys, &x0, &grid, 300, seed).unwrap();
        let b = simulate_sde(&sys, &x0, &grid, 300, seed).unwrap();
        prop_assert_eq!(&a.moments, &b.moments);
        let c = simulate_sde(&sys, &x0, &grid, 300, seed.wrapping_add(1)).unwrap();
        prop_assert!(c.moments.last() != a.moments.last());
    }
}
