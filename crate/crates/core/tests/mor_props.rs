mod common;

use bilimor::benchgen::{random_stable_system, toy_system, StabilityTarget};
use bilimor::gramians::{gramian_set, h2_error};
use bilimor::linalg::Mat;
use bilimor::mor::{
    balance, balanced_realization, balanced_truncation, bilinear_irka, optimality_residuals, project, singular_perturbation,
    spa_blocks, IrkaInit, IrkaOptions,
};
use bilimor::sysmodel::BilinearSystem;
use bilimor::Error;
use common::{rel_diff, rel_err};
use proptest::prelude::*;

fn diag(v: &[f64]) -> Mat {
    Mat::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

#[test]
fn toy_hsv_are_frozen() {
    let sys = toy_system();
    let set = gramian_set(&sys, None).unwrap();
    let t = balance(&set.p, &set.q).unwrap();
    for (got, want) in t.hsv.iter().zip(common::toy::HSV) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn toy_bt_and_spa_are_frozen() {
    let sys = toy_system();
    let set = gramian_set(&sys, None).unwrap();
    let bt = balanced_truncation(&sys, 1, &set).unwrap().rom;
    assert!((bt.a[(0, 0)] - common::toy::BT_A).abs() < 1e-12);
    assert!((bt.n[0][(0, 0)] - common::toy::BT_N1).abs() < 1e-12);
    assert_eq!(bt.n[1][(0, 0)], 0.0);
    let cb = &bt.c * &bt.b;
    for (got, want) in cb.iter().zip(common::toy::BT_CB) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!(rel_diff(h2_error(&sys, &bt).unwrap().powi(2), common::toy::BT_H2_ERR_SQ) < 1e-9);

    let spa = singular_perturbation(&sys, 1, &set).unwrap().rom;
    assert!((spa.a[(0, 0)] - common::toy::SPA_A).abs() < 1e-12);
    assert!((spa.n[0][(0, 0)] - common::toy::SPA_N1).abs() < 1e-12);
    assert!(rel_diff(h2_error(&sys, &spa).unwrap().powi(2), common::toy::SPA_H2_ERR_SQ) < 1e-9);
}

#[test]
fn bt_preserves_mean_square_stability() {
    let mut unstable = Vec::new();
    for seed in 0..100u64 {
        let n = 3 + (seed % 8) as usize;
        let sys = random_stable_system(n, 1 + (seed % 3) as usize, 1 + (seed % 2) as usize, 500 + seed, StabilityTarget::MeanSquare)
            .unwrap();
        let set = gramian_set(&sys, None).unwrap();
        let r = 1 + (seed as usize) % (n - 1);
        let res = balanced_truncation(&sys, r, &set).unwrap();
        if !res.rom_mean_square_stable {
            unstable.push(seed);
        }
    }
    assert!(unstable.is_empty(), "unstable BT models for seeds {unstable:?}");
}

#[test]
fn order_outside_range_is_rejected() {
    let sys = toy_system();
    let set = gramian_set(&sys, None).unwrap();
    assert!(matches!(balanced_truncation(&sys, 0, &set), Err(Error::InvalidParameter(_))));
    assert!(matches!(singular_perturbation(&sys, 3, &set), Err(Error::InvalidParameter(_))));
}

#[test]
fn irka_on_toy_meets_optimality_conditions() {
    let sys = toy_system();
    let res = bilinear_irka(&sys, 1, &IrkaOptions::default()).unwrap();
    assert!(res.converged);
    let (v, w) = res.projection.clone().unwrap();
    assert!(rel_err(&project(&sys, &v, &w).unwrap().a, &res.rom.a) < 1e-12);
    assert!(optimality_residuals(&sys, &res.rom).unwrap().max() <= 1e-5);
    // a BT model at the same order is not H2-optimal
    let bt = balanced_truncation(&sys, 1, &gramian_set(&sys, None).unwrap()).unwrap().rom;
    assert!(optimality_residuals(&sys, &bt).unwrap().max() > 1e-3);
    assert!(h2_error(&sys, &res.rom).unwrap() <= h2_error(&sys, &bt).unwrap() * (1.0 + 1e-9));
}

#[test]
fn irka_init_variants_agree() {
    let sys = random_stable_system(6, 2, 1, 42, StabilityTarget::MeanSquare).unwrap();
    let from_bt = bilinear_irka(&sys, 2, &IrkaOptions::default()).unwrap();
    let real_form = bilinear_irka(&sys, 2, &IrkaOptions { dense_limit: 0, ..IrkaOptions::default() }).unwrap();
    assert!(from_bt.converged && real_form.converged);
    let e1 = h2_error(&sys, &from_bt.rom).unwrap();
    let e2 = h2_error(&sys, &real_form.rom).unwrap();
    assert!(rel_diff(e1, e2) < 1e-6, "{e1} vs {e2}");
}

#[test]
fn irka_rejects_misshapen_start() {
    let sys = toy_system();
    let opts = IrkaOptions { init: IrkaInit::Given(common::scalar_system(-1.0, 1.0, 1.0, 0.0)), ..Default::default() };
    assert!(matches!(bilinear_irka(&sys, 1, &opts), Err(Error::Dimension(_))));
}

fn ms_stable() -> impl Strategy<Value = BilinearSystem> {
    (2usize..=8, 1usize..=3, 1usize..=2, any::<u64>())
        .prop_map(|(n, m, p, seed)| random_stable_system(n, m, p, seed, StabilityTarget::MeanSquare).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn balanced_realization_has_equal_diagonal_gramians(sys in ms_stable()) {
        let set = gramian_set(&sys, None).unwrap();
        let t = balance(&set.p, &set.q).unwrap();
        let bal = balanced_realization(&sys, &t);
        let d = diag(&t.hsv);
        let scale = t.hsv[0];
        prop_assert!((common::reach_gramian(&bal) - &d).norm() <= 1e-8 * scale);
        prop_assert!((common::observe_gramian(&bal) - &d).norm() <= 1e-8 * scale);
        prop_assert!(t.hsv.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn spa_equals_bt_without_coupling(n in 2usize..=6, seed in any::<u64>(), r_pick in 0usize..100) {
        let mut sys = random_stable_system(n, 2, 1, seed, StabilityTarget::Hurwitz).unwrap();
        let r = 1 + r_pick % (n - 1);
        for i in r..n {
            for j in 0..r {
                sys.a[(i, j)] = 0.0;
            }
        }
        let spa = spa_blocks(&sys, r).unwrap();
        prop_assert_eq!(spa.a, sys.a.view((0, 0), (r, r)).into_owned());
        prop_assert_eq!(spa.c, sys.c.columns(0, r).into_owned());
        for (got, nk) in spa.n.iter().zip(&sys.n) {
            prop_assert_eq!(got, &nk.view((0, 0), (r, r)).into_owned());
        }
    }

    #[test]
    fn spa_keeps_dc_gain_when_b2_vanishes(n in 2usize..=6, seed in any::<u64>(), r_pick in 0usize..100) {
        let base = random_stable_system(n, 2, 2, seed, StabilityTarget::Hurwitz).unwrap();
        let r = 1 + r_pick % (n - 1);
        let mut b = base.b.clone();
        b.rows_mut(r, n - r).fill(0.0);
        let sys = BilinearSystem::linear(base.a.clone(), b, base.c.clone()).unwrap();
        let rom = spa_blocks(&sys, r).unwrap();
        let gain = |s: &BilinearSystem| -&s.c * s.a.clone().try_inverse().unwrap() * &s.b;
        prop_assert!(rel_err(&gain(&rom), &gain(&sys)) < 1e-9);
    }

    #[test]
    fn irka_at_full_order_is_exact(n in 1usize..=4, seed in any::<u64>()) {
        let sys = random_stable_system(n, 1, 1, seed, StabilityTarget::MeanSquare).unwrap();
        let res = bilinear_irka(&sys, n, &IrkaOptions { init: IrkaInit::Given(sys.clone()), ..Default::default() }).unwrap();
        prop_assert!(res.converged);
        prop_assert!(h2_error(&sys, &res.rom).unwrap() <= 1e-6 * bilimor::gramians::h2_norm(&sys).unwrap());
    }
}
