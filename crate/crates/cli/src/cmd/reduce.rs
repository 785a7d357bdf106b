use serde_json::{json, Map, Value};

use bilimor::bounds::resolve_gamma;
use bilimor::gramians::{gramian_set_scaled, h2_error, GramianSet};
use bilimor::io::write_matrix_market_with;
use bilimor::mor::{balanced_truncation, bilinear_irka, optimality_residuals, singular_perturbation, IrkaInit, IrkaOptions};

use crate::args::{MethodArg, ReduceArgs};
use crate::artifact::{num, nums, Artifacts};
use crate::control::{load_system, parse_gamma};
use crate::failure::{Failure, Outcome};

fn parse_init(text: &str) -> Outcome<IrkaInit> {
    if text == "bt" {
        return Ok(IrkaInit::Bt);
    }
    text.strip_prefix("random:")
        .and_then(|s| s.parse().ok())
        .map(IrkaInit::Random)
        .ok_or_else(|| Failure::config(format!("--irka-init must be 'bt' or 'random:SEED', got '{text}'")))
}

fn export_gramians(out: &Artifacts, set: &GramianSet) -> Outcome<()> {
    let dir = out.path("gramians");
    std::fs::create_dir_all(&dir)?;
    let tags = out.provenance.tags();
    std::fs::write(dir.join("P.mtx"), write_matrix_market_with(&set.p, &tags))?;
    std::fs::write(dir.join("Q.mtx"), write_matrix_market_with(&set.q, &tags))?;
    let residuals: Map<String, Value> = set.residuals.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
    out.json("gramians.json", json!({ "gamma_used": num(set.gamma_used), "residuals": residuals, "files": ["gramians/P.mtx", "gramians/Q.mtx"] }))
}

pub fn run(args: &ReduceArgs, out: &Artifacts) -> Outcome<()> {
    let sys = load_system(&args.system)?;
    let init = parse_init(&args.irka_init)?;
    if !(args.tol > 0.0) {
        return Err(Failure::config(format!("--tol must be positive, got {}", args.tol)));
    }
    let gamma = resolve_gamma(&[&sys], parse_gamma(&args.gamma)?)?;
    let needs_set = args.export_gramians || args.method != MethodArg::Irka;
    let set = if needs_set { Some(gramian_set_scaled(&sys, None, gamma)?) } else { None };

    let mut extra = Map::new();
    let res = match args.method {
        MethodArg::Bt => balanced_truncation(&sys, args.order, set.as_ref().expect("gramians computed"))?,
        MethodArg::Spa => singular_perturbation(&sys, args.order, set.as_ref().expect("gramians computed"))?,
        MethodArg::Irka => {
            // IRKA works on the rescaled pair; the model is scaled back afterwards
            let scaled = sys.rescale(gamma)?;
            let opts = IrkaOptions { init, tol: args.tol, maxit: args.maxit, ..IrkaOptions::default() };
            let mut res = bilinear_irka(&scaled, args.order, &opts)?;
            let r = optimality_residuals(&scaled, &res.rom)?;
            extra.insert("optimality_residuals".into(), serde_json::to_value(r).map_err(|e| Failure::config(e.to_string()))?);
            res.rom = res.rom.rescale(1.0 / gamma)?;
            res
        }
    };

    out.bundle("rom", &res.rom)?;
    if let Some(set) = set.as_ref().filter(|_| args.export_gramians) {
        export_gramians(out, set)?;
    }
    // H2 error of the rescaled pair; undefined if the ROM lost stability
    let h2 = match (sys.rescale(gamma), res.rom.rescale(gamma)) {
        (Ok(f), Ok(r)) => h2_error(&f, &r).ok(),
        _ => None,
    };
    let mut payload = json!({
        "method": args.method,
        "order": args.order,
        "full_order": sys.state_dim(),
        "gamma": num(gamma),
        "hsv_kept": nums(&res.hsv_kept),
        "hsv_dropped": nums(&res.hsv_dropped),
        "iterations": res.iterations,
        "converged": res.converged,
        "rom_mean_square_stable": res.rom_mean_square_stable,
        "h2_error_scaled": h2.map_or(Value::Null, num),
        "warnings": res.warnings,
        "bundle": "rom/system.json",
    });
    if let Value::Object(map) = &mut payload {
        map.extend(extra);
    }
    out.json("reduce.json", payload)
}
