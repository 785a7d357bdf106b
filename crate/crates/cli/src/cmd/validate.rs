//! Seeded property suites over random systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use bilimor::benchgen::{random_stable_system, random_system_with_radius, StabilityTarget};
use bilimor::bounds::bt_weighted_bound;
use bilimor::gramians::{gramian_set, h2_error, reach_gramian};
use bilimor::linalg::Vector;
use bilimor::lyapunov::{kron_stability_with, StabilityOptions};
use bilimor::mor::{balanced_realization, balanced_truncation};
use bilimor::simulate::{gronwall_check, uniform_grid};
use bilimor::sysmodel::{build_error_system, ControlSignal};

use crate::args::{Suite, ValidateArgs};
use crate::artifact::{num, Artifacts};
use crate::failure::{Failure, Outcome};

/// Relative tolerance of the trace identities.
const TRACE_TOL: f64 = 1e-8;
/// Gronwall margins may dip below zero by this fraction of `‖Z̄‖₂`.
const GRONWALL_TOL: f64 = 1e-6;

/// Outcome of one random case: `Ok(metric)` or a failure description.
type Case = Result<f64, String>;

type CaseFn = fn(&mut ChaCha8Rng) -> Case;

fn random_control(rng: &mut ChaCha8Rng, m: usize) -> ControlSignal {
    let pieces = rng.random_range(1..=4);
    let mut times = vec![0.0];
    let mut values = Vec::with_capacity(pieces);
    for i in 0..pieces {
        times.push(times[i] + rng.random_range(0.1..0.6));
        values.push(Vector::from_fn(m, |_, _| rng.random_range(-1.5..1.5)));
    }
    ControlSignal::piecewise_constant(times, values).expect("increasing breakpoints")
}

fn gronwall_case(rng: &mut ChaCha8Rng) -> Case {
    let (n, m) = (rng.random_range(1..=5), rng.random_range(1..=2));
    let rho = rng.random_range(0.2..3.0);
    let sys = random_system_with_radius(n, m, 1, rng.random(), rho).map_err(|e| e.to_string())?;
    let u = random_control(rng, m);
    let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let rep = gronwall_check(&sys, &u, &x0, 0.0, &uniform_grid(1.5, 0.05)).map_err(|e| e.to_string())?;
    let rel = rep.min_margin() / rep.scale.max(f64::MIN_POSITIVE);
    if rep.holds(GRONWALL_TOL) {
        Ok(rel)
    } else {
        Err(format!("n={n} rho={rho:.3}: relative margin {rel:.3e}"))
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn traces_case(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(2..=6);
    let (m, p) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let r = rng.random_range(1..n);
    let err = |e: bilimor::Error| format!("n={n} r={r}: {e}");
    let sys = random_stable_system(n, m, p, rng.random(), StabilityTarget::MeanSquare).map_err(err)?;
    let bt = balanced_truncation(&sys, r, &gramian_set(&sys, None).map_err(err)?).map_err(err)?;

    // error-system trace against the three-trace formula
    let e = h2_error(&sys, &bt.rom).map_err(err)?;
    let es = build_error_system(&sys, &bt.rom).map_err(err)?.system;
    let tr = (&es.c * reach_gramian(&es).map_err(err)? * es.c.transpose()).trace();
    let gap3 = rel_gap(e * e, tr);

    let t = bt.transform.as_ref().ok_or_else(|| format!("n={n} r={r}: no balancing transform"))?;
    let bal = balanced_realization(&sys, t);
    let u = ControlSignal::constant(Vector::from_element(m, 1.0), 1.0);
    let wb = bt_weighted_bound(&bal, &t.hsv, r, &u, 1.0).map_err(err)?;
    let gap = gap3.max(wb.identity_gap);
    if gap <= TRACE_TOL {
        Ok(gap)
    } else {
        Err(format!("n={n} r={r}: three-trace gap {gap3:.3e}, weighted gap {:.3e}", wb.identity_gap))
    }
}

fn stability_case(rng: &mut ChaCha8Rng) -> Case {
    let (n, m) = (rng.random_range(2..=5), rng.random_range(1..=2));
    // keep clear of the boundary so both methods must agree
    let rho = if rng.random_bool(0.5) { rng.random_range(0.2..0.9) } else { rng.random_range(1.1..2.0) };
    let err = |e: bilimor::Error| format!("n={n} rho={rho:.3}: {e}");
    let sys = random_system_with_radius(n, m, 1, rng.random(), rho).map_err(err)?;
    let dense = kron_stability_with(&sys, &StabilityOptions { dense_cap: usize::MAX, ..Default::default() }).map_err(err)?;
    let cert = kron_stability_with(&sys, &StabilityOptions { dense_cap: 0, ..Default::default() }).map_err(err)?;
    let expected = rho < 1.0;
    let radius_gap = dense.spectral_radius.map_or(f64::INFINITY, |r| rel_gap(r, rho));
    let sufficient_ok = dense.sufficient_margin.is_none_or(|s| s >= 1.0 || dense.mean_square_stable);
    if dense.mean_square_stable == expected && cert.mean_square_stable == expected && radius_gap <= 1e-6 && sufficient_ok {
        Ok(radius_gap)
    } else {
        Err(format!(
            "n={n} rho={rho:.3}: dense {} certificate {} radius gap {radius_gap:.3e}",
            dense.mean_square_stable, cert.mean_square_stable
        ))
    }
}

fn run_suite(name: &str, seed: u64, count: usize, case: CaseFn) -> (usize, Value) {
    // one stream per suite, so suites do not shift each other's cases
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(name.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)));
    let mut failures = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..count {
        match case(&mut rng) {
            Ok(metric) => worst = worst.max(metric.abs()),
            Err(msg) => failures.push(json!({ "case": i, "detail": msg })),
        }
    }
    let failed = failures.len();
    let summary = json!({
        "cases": count,
        "failed": failed,
        "worst_metric": if worst.is_finite() { num(worst) } else { Value::Null },
        "failures": failures,
    });
    (failed, summary)
}

pub fn run(args: &ValidateArgs, out: &Artifacts) -> Outcome<()> {
    if args.count == 0 {
        return Err(Failure::config("--count must be positive"));
    }
    let suites: [(&str, Suite, CaseFn); 3] = [
        ("gronwall", Suite::Gronwall, gronwall_case),
        ("traces", Suite::Traces, traces_case),
        ("stability", Suite::Stability, stability_case),
    ];
    let mut report = serde_json::Map::new();
    let mut failed = 0;
    for (name, suite, case) in suites {
        if args.suite == Suite::All || args.suite == suite {
            let (f, summary) = run_suite(name, args.seed, args.count, case);
            failed += f;
            report.insert(name.into(), summary);
        }
    }
    out.json("validate.json", json!({ "suites": report, "failed": failed, "pass": failed == 0 }))?;
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::validation(format!("{failed} validation case(s) failed; see validate.json")))
    }
}
