mod common;

use bilimor::benchgen::heat2d;
use bilimor::linalg::spectral_abscissa;
use bilimor::lyapunov::{ms_gamma_threshold, ms_spectral_radius};
use bilimor::sysmodel::gamma_threshold;

#[test]
fn heat10_radius_is_frozen() {
    let sys = heat2d(10).unwrap().system;
    assert_eq!(sys.state_dim(), 100);
    assert!(spectral_abscissa(&sys.a) < 0.0);
    let rho = ms_spectral_radius(&sys).unwrap();
    assert!((rho - common::HEAT10_MS_RADIUS).abs() < 1e-9, "{rho}");
    // the norm-based threshold is sufficient only, hence conservative
    assert!(gamma_threshold(&sys).unwrap() >= rho.sqrt());
}

/// Full-size mesh (n = 900); minutes on a single core.
#[test]
#[ignore]
fn heat30_needs_rescaling() {
    let sys = heat2d(30).unwrap().system;
    let gamma = ms_gamma_threshold(&sys).unwrap();
    println!("heat ñ=30: mean-square gamma threshold {gamma}");
    assert!(gamma > 1.0 && gamma <= 1.6, "{gamma}");
}
