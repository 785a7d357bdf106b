use serde_json::{json, Value};

use bilimor::benchgen::{heat2d, random_stable_system, random_system_with_radius, toy_system, StabilityTarget};
use bilimor::lyapunov::kron_stability;
use bilimor::sysmodel::{gamma_threshold, BilinearSystem};

use crate::args::{GenArgs, GenKind, Target};
use crate::artifact::{num, Artifacts};
use crate::failure::{Failure, Outcome};

fn build(args: &GenArgs) -> Outcome<BilinearSystem> {
    Ok(match args.kind {
        GenKind::Toy => toy_system(),
        GenKind::Heat => heat2d(args.nn)?.system,
        GenKind::Random => match args.radius {
            Some(rho) if !(rho >= 0.0) || !rho.is_finite() => {
                return Err(Failure::config(format!("--radius must be nonnegative, got {rho}")))
            }
            Some(rho) => random_system_with_radius(args.n, args.m, args.p, args.seed, rho)?,
            None => {
                let target = match args.target {
                    Target::Hurwitz => StabilityTarget::Hurwitz,
                    Target::Ms => StabilityTarget::MeanSquare,
                };
                random_stable_system(args.n, args.m, args.p, args.seed, target)?
            }
        },
    })
}

fn stability(sys: &BilinearSystem) -> Outcome<Value> {
    let rep = kron_stability(sys)?;
    let mut v = serde_json::to_value(&rep).map_err(|e| Failure::config(e.to_string()))?;
    let sufficient = if rep.hurwitz { num(gamma_threshold(sys)?) } else { Value::Null };
    v["gamma_threshold_sufficient"] = sufficient;
    v["gamma_threshold"] = rep.spectral_radius.map_or(Value::Null, |r| num(r.sqrt()));
    Ok(v)
}

pub fn run(args: &GenArgs, out: &Artifacts) -> Outcome<()> {
    let sys = build(args)?;
    out.bundle("system", &sys)?;
    let stab = if args.skip_stability { Value::Null } else { stability(&sys)? };
    out.json(
        "gen.json",
        json!({
            "kind": args.kind,
            "n": sys.state_dim(),
            "m": sys.input_dim(),
            "p": sys.output_dim(),
            "bundle": "system/system.json",
            "stability": stab,
        }),
    )
}
