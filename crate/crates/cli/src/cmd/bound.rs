use rayon::prelude::*;
use serde_json::{json, Value};

use bilimor::bounds::{
    control_factor, control_l2_norms, output_bound, output_error_bound, simulated_sup_error, simulated_sup_output,
    BoundReport, GammaPolicy,
};
use bilimor::io::fmt_num;
use bilimor::sysmodel::{build_error_system, BilinearSystem, ControlSignal, U0Mask};
use bilimor::Error;

use crate::args::BoundArgs;
use crate::artifact::{num, Artifacts};
use crate::control::{build_control, control_with_alpha, load_system, parse_gamma, parse_sweep, SweepVar};
use crate::failure::{Failure, Outcome};

/// Simulated values above the bound by more than this count as violations.
const SLACK: f64 = 1e-6;

struct Problem {
    full: BilinearSystem,
    rom: Option<BilinearSystem>,
}

impl Problem {
    fn bound(&self, u: &ControlSignal, policy: GammaPolicy) -> bilimor::Result<BoundReport> {
        match &self.rom {
            Some(r) => output_error_bound(&self.full, r, u, policy),
            None => output_bound(&self.full, u, policy),
        }
    }

    fn simulated(&self, u: &ControlSignal) -> bilimor::Result<f64> {
        match &self.rom {
            Some(r) => simulated_sup_error(&self.full, r, u),
            None => simulated_sup_output(&self.full, u),
        }
    }

    fn mask(&self) -> bilimor::Result<U0Mask> {
        Ok(match &self.rom {
            Some(r) => build_error_system(&self.full, r)?.system.u0_mask(),
            None => self.full.u0_mask(),
        })
    }
}

struct Row {
    alpha: f64,
    gamma: f64,
    report: Option<BoundReport>,
    status: &'static str,
}

fn status(report: &BoundReport) -> &'static str {
    if report.dominates(SLACK) {
        "ok"
    } else {
        "violated"
    }
}

/// Errors that make a sweep point infeasible rather than aborting the run.
fn infeasible(e: &Error) -> bool {
    matches!(e, Error::InfeasibleGamma { .. } | Error::ReducedUnstable(_) | Error::NotMeanSquareStable(_))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn sweep_csv(rows: &[Row]) -> String {
    let mut s = String::from("alpha,gamma,bound,simulated,ratio,status\n");
    for r in rows {
        let rep = r.report.as_ref();
        s += &format!(
            "{},{},{},{},{},{}\n",
            fmt_num(r.alpha),
            fmt_num(r.gamma),
            opt(rep.map(|x| x.bound)),
            opt(rep.and_then(|x| x.simulated_sup)),
            opt(rep.and_then(|x| x.ratio)),
            r.status
        );
    }
    s
}

fn to_value(report: &BoundReport) -> Outcome<Value> {
    let mut v = serde_json::to_value(report).map_err(|e| Failure::config(e.to_string()))?;
    // non-finite ratios serialize as null
    if let Some(ratio) = report.ratio {
        v["ratio"] = num(ratio);
    }
    Ok(v)
}

/// The H2 factor does not depend on the control, so only the control factor
/// is recomputed per amplitude.
fn alpha_sweep(pb: &Problem, args: &BoundArgs, base: &BoundReport, alphas: &[f64]) -> Outcome<Vec<Row>> {
    let m = pb.full.input_dim();
    let mask = pb.mask()?;
    alphas
        .par_iter()
        .map(|&alpha| -> Outcome<Row> {
            let u = control_with_alpha(&args.control.control, alpha, m)?;
            let (l2_u, l2_u0) = control_l2_norms(&u, &mask)?;
            let cf = control_factor(base.gamma, l2_u, l2_u0);
            let mut rep = BoundReport {
                h2_quantity: base.h2_quantity,
                control_factor: cf,
                bound: base.h2_quantity * cf,
                gamma: base.gamma,
                l2_u,
                l2_u0,
                simulated_sup: None,
                ratio: None,
            };
            if !args.no_simulate {
                rep = rep.with_simulation(pb.simulated(&u)?);
            }
            Ok(Row { alpha, gamma: base.gamma, status: status(&rep), report: Some(rep) })
        })
        .collect()
}

fn gamma_sweep(pb: &Problem, u: &ControlSignal, alpha: f64, sup: Option<f64>, gammas: &[f64]) -> Outcome<Vec<Row>> {
    gammas
        .par_iter()
        .map(|&gamma| -> Outcome<Row> {
            match pb.bound(u, GammaPolicy::Fixed(gamma)) {
                Ok(mut rep) => {
                    if let Some(s) = sup {
                        rep = rep.with_simulation(s);
                    }
                    Ok(Row { alpha, gamma, status: status(&rep), report: Some(rep) })
                }
                Err(e) if infeasible(&e) => Ok(Row { alpha, gamma, report: None, status: "infeasible" }),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

pub fn run(args: &BoundArgs, out: &Artifacts) -> Outcome<()> {
    let full = load_system(&args.system)?;
    let rom = args.rom.as_deref().map(load_system).transpose()?;
    let sweep = args.sweep.as_deref().map(parse_sweep).transpose()?;
    let policy = parse_gamma(&args.gamma)?;
    let pb = Problem { full, rom };
    let u = build_control(&args.control, pb.full.input_dim())?;

    let mut base = pb.bound(&u, policy)?;
    let sup = if args.no_simulate { None } else { Some(pb.simulated(&u)?) };
    if let Some(s) = sup {
        base = base.with_simulation(s);
    }

    let mut payload = json!({
        "kind": if pb.rom.is_some() { "output_error" } else { "output" },
        "report": to_value(&base)?,
        "dominated": base.dominates(SLACK),
    });
    if let Some((var, points)) = sweep {
        let rows = match var {
            SweepVar::Alpha => alpha_sweep(&pb, args, &base, &points)?,
            SweepVar::Gamma => gamma_sweep(&pb, &u, args.control.alpha, sup, &points)?,
        };
        out.csv("sweep.csv", &sweep_csv(&rows))?;
        let ratios: Vec<f64> = rows.iter().filter_map(|r| r.report.as_ref()?.ratio).collect();
        payload["sweep"] = json!({
            "variable": if var == SweepVar::Alpha { "alpha" } else { "gamma" },
            "points": rows.len(),
            "infeasible": rows.iter().filter(|r| r.status == "infeasible").count(),
            "violated": rows.iter().filter(|r| r.status == "violated").count(),
            "min_ratio": ratios.iter().copied().reduce(f64::min).map_or(Value::Null, num),
            "file": "sweep.csv",
        });
    }
    out.json("bound.json", payload)
}
