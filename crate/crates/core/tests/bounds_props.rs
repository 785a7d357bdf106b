mod common;

use bilimor::benchgen::{toy_control, random_stable_system, random_system_with_radius, toy_system, StabilityTarget};
use bilimor::bounds::{
    bt_weighted_bound, output_bound, output_error_bound, reachability_estimate, resolve_gamma, simulated_sup_error,
    simulated_sup_output, spa_weighted_bound, GammaPolicy, AUTO_GAMMA_MARGIN,
};
use bilimor::gramians::gramian_set;
use bilimor::linalg::{cond, Vector};
use bilimor::lyapunov::kron_stability;
use bilimor::mor::{balance, balanced_realization, balanced_truncation};
use bilimor::sysmodel::{gamma_threshold, BilinearSystem, ControlSignal};
use bilimor::Error;
use common::rel_diff;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_control(m: usize, seed: u64) -> ControlSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces = rng.random_range(1..=5);
    let mut times = vec![0.0];
    let mut values = Vec::new();
    for i in 0..pieces {
        times.push((i + 1) as f64 * rng.random_range(0.1..0.5) + times[i]);
        values.push(Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)));
    }
    ControlSignal::piecewise_constant(times, values).unwrap()
}

fn balanced(sys: &BilinearSystem) -> (BilinearSystem, Vec<f64>) {
    let set = gramian_set(sys, None).unwrap();
    let t = balance(&set.p, &set.q).unwrap();
    (balanced_realization(sys, &t), t.hsv)
}

#[test]
fn toy_bounds_dominate_simulation() {
    let sys = toy_system();
    let set = gramian_set(&sys, None).unwrap();
    let rom = balanced_truncation(&sys, 1, &set).unwrap().rom;
    for alpha in [0.25, 1.0, 3.0] {
        let u = toy_control(alpha).unwrap();
        let rep = output_bound(&sys, &u, GammaPolicy::Auto).unwrap().with_simulation(simulated_sup_output(&sys, &u).unwrap());
        assert!(rep.dominates(1e-6), "{rep:?}");
        let rep = output_error_bound(&sys, &rom, &u, GammaPolicy::Auto)
            .unwrap()
            .with_simulation(simulated_sup_error(&sys, &rom, &u).unwrap());
        assert!(rep.dominates(1e-6), "{rep:?}");
    }
}

#[test]
fn toy_weighted_bounds_match_frozen_errors() {
    let (bal, hsv) = balanced(&toy_system());
    let u = toy_control(1.0).unwrap();
    let bt = bt_weighted_bound(&bal, &hsv, 1, &u, 1.0).unwrap();
    assert!(rel_diff(bt.trace, common::toy::BT_H2_ERR_SQ) < 1e-9);
    let spa = spa_weighted_bound(&bal, &hsv, 1, &u, 1.0).unwrap();
    assert!(rel_diff(spa.trace, common::toy::SPA_H2_ERR_SQ) < 1e-9);
}

#[test]
fn unbalanced_input_is_rejected() {
    let sys = toy_system();
    let u = toy_control(1.0).unwrap();
    let err = bt_weighted_bound(&sys, &[1.0, 0.5], 1, &u, 1.0).unwrap_err();
    assert!(matches!(err, Error::BalanceRequired(_)));
}

#[test]
fn auto_gamma_restores_mean_square_stability() {
    for seed in 0..10u64 {
        let sys = random_system_with_radius(4, 2, 1, seed, 2.5).unwrap();
        let g = resolve_gamma(&[&sys], GammaPolicy::Auto).unwrap();
        assert!((g - AUTO_GAMMA_MARGIN * gamma_threshold(&sys).unwrap()).abs() < 1e-12);
        assert!(kron_stability(&sys.rescale(g).unwrap()).unwrap().mean_square_stable);
        let u = random_control(2, seed);
        let rep = output_bound(&sys, &u, GammaPolicy::Auto).unwrap().with_simulation(simulated_sup_output(&sys, &u).unwrap());
        assert!(rep.dominates(1e-6), "seed {seed}: {rep:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_bounds_dominate(n in 2usize..=5, m in 1usize..=2, seed in any::<u64>(), rho in 0.1f64..3.0) {
        let sys = random_system_with_radius(n, m, 1, seed, rho).unwrap();
        let u = random_control(m, seed ^ 1);
        let rep = output_bound(&sys, &u, GammaPolicy::Auto).unwrap().with_simulation(simulated_sup_output(&sys, &u).unwrap());
        prop_assert!(rep.dominates(1e-6), "{:?}", rep);
        if rho < 1.0 {
            for dir in reachability_estimate(&sys, &u, true).unwrap() {
                prop_assert!(dir.observed.unwrap() <= dir.rhs + 1e-6);
            }
        }
    }

    #[test]
    fn weighted_traces_equal_h2_errors(n in 2usize..=7, m in 1usize..=3, seed in any::<u64>(), pick in 0usize..100) {
        let sys = random_stable_system(n, m, 1, seed, StabilityTarget::MeanSquare).unwrap();
        let (bal, hsv) = balanced(&sys);
        let r = 1 + pick % (n - 1);
        let u = random_control(m, seed);
        let bt = bt_weighted_bound(&bal, &hsv, r, &u, 1.0).unwrap();
        let oracle = common::error_system_h2_sq(&bal, &balanced_truncation(&sys, r, &gramian_set(&sys, None).unwrap()).unwrap().rom);
        prop_assert!(rel_diff(bt.trace, oracle) < 1e-8, "BT {} vs {}", bt.trace, oracle);
        let a22 = bal.a.view((r, r), (n - r, n - r)).into_owned();
        if cond(&a22) <= 1e6 {
            match spa_weighted_bound(&bal, &hsv, r, &u, 1.0) {
                Ok(spa) => {
                    let rom = bilimor::mor::spa_blocks(&bal, r).unwrap();
                    let oracle = common::error_system_h2_sq(&bal, &rom);
                    prop_assert!(rel_diff(spa.trace, oracle) < 1e-8, "SPA {} vs {}", spa.trace, oracle);
                }
                Err(Error::ReducedUnstable(_)) => {}
                Err(e) => prop_assert!(false, "{}", e),
            }
        }
    }
}
