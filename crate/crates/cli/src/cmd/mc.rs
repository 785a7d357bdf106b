use serde_json::{json, Value};

use bilimor::linalg::Vector;
use bilimor::simulate::uniform_grid;
use bilimor::stochastic::{decay_rate_estimate, moment_check};

use crate::args::McArgs;
use crate::artifact::{num, Artifacts};
use crate::control::{load_system, parse_vector};
use crate::failure::{Failure, Outcome};

pub fn run(args: &McArgs, out: &Artifacts) -> Outcome<()> {
    let sys = load_system(&args.system)?;
    if args.paths == 0 {
        return Err(Failure::config("--paths must be positive"));
    }
    if !(args.t_end > 0.0) || !(args.dt > 0.0) || args.dt > args.t_end {
        return Err(Failure::config("--t-end and --dt must be positive with dt <= t-end"));
    }
    let n = sys.state_dim();
    let x0 = args.x0.as_deref().map(|s| parse_vector(s, n)).transpose()?.unwrap_or_else(|| Vector::from_element(n, 1.0));

    let chk = moment_check(&sys, &x0, &uniform_grid(args.t_end, args.dt), args.paths, args.seed)?;
    out.csv("moments.csv", &chk.moments.summary_csv(Some(&chk.reference)))?;

    let decay = match args.decay_horizon {
        None => Value::Null,
        Some(h) if !(h > 0.0) => return Err(Failure::config("--decay-horizon must be positive")),
        Some(h) => {
            let fit = decay_rate_estimate(&sys, &x0, h, args.dt, args.paths, args.seed)?;
            json!({ "horizon": num(h), "k1": num(fit.k1), "k2": num(fit.k2), "residual": num(fit.residual), "excluded": fit.excluded })
        }
    };
    out.json(
        "mc.json",
        json!({
            "paths": args.paths,
            "retained": chk.moments.retained(),
            "excluded": chk.moments.excluded,
            "unstable_warning": chk.moments.unstable_warning(),
            "deviation": num(chk.deviation),
            "tolerance": num(chk.tolerance),
            "pass": chk.pass,
            "final_trace": num(chk.moments.traces().last().copied().unwrap_or(f64::NAN)),
            "decay": decay,
        }),
    )?;
    if chk.pass {
        Ok(())
    } else {
        Err(Failure::validation(format!("moment deviation {:.3e} exceeds tolerance {:.3e}", chk.deviation, chk.tolerance)))
    }
}
