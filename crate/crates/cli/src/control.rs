//! Control signals and small argument parsers.

use std::path::Path;

use bilimor::benchgen::toy_control;
use bilimor::io::read_bundle;
use bilimor::linalg::Vector;
use bilimor::sysmodel::{BilinearSystem, ControlSignal};

use crate::args::ControlArgs;
use crate::failure::{Failure, Outcome};

pub fn load_system(path: &Path) -> Outcome<BilinearSystem> {
    if !path.exists() {
        return Err(Failure::config(format!("system bundle {} does not exist", path.display())));
    }
    Ok(read_bundle(path)?)
}

/// Builds the control of `args` for a system with `m` inputs.
pub fn build_control(args: &ControlArgs, m: usize) -> Outcome<ControlSignal> {
    control_with_alpha(&args.control, args.alpha, m)
}

/// Control `spec` (`toy`, `zero` or a CSV path) at amplitude `alpha`.
pub fn control_with_alpha(spec: &str, alpha: f64, m: usize) -> Outcome<ControlSignal> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Failure::config(format!("--alpha must be a nonnegative number, got {alpha}")));
    }
    let u = match spec {
        "toy" => {
            if m != 2 {
                return Err(Failure::config(format!("the toy control has 2 channels, the system has {m}")));
            }
            return Ok(toy_control(alpha)?);
        }
        "zero" => ControlSignal::zero(m),
        file => read_samples(Path::new(file), m)?,
    };
    Ok(u.scaled(alpha))
}

fn read_samples(path: &Path, m: usize) -> Outcome<ControlSignal> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read control file {}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let Ok(fields) = fields else {
            // a header row is allowed as the first content line
            if times.is_empty() {
                continue;
            }
            return Err(Failure::config(format!("{}:{}: non-numeric field", path.display(), lineno + 1)));
        };
        if fields.len() != m + 1 {
            return Err(Failure::config(format!(
                "{}:{}: expected {} columns (t and {m} inputs), found {}",
                path.display(),
                lineno + 1,
                m + 1,
                fields.len()
            )));
        }
        times.push(fields[0]);
        values.push(Vector::from_column_slice(&fields[1..]));
    }
    Ok(ControlSignal::sampled(times, values)?)
}

/// Parses a comma-separated vector of length `n`.
pub fn parse_vector(text: &str, n: usize) -> Outcome<Vector> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| Failure::config(format!("cannot parse vector '{text}'")))?;
    if vals.len() != n {
        return Err(Failure::config(format!("vector '{text}' has {} entries, expected {n}", vals.len())));
    }
    Ok(Vector::from_vec(vals))
}

/// `auto` or a positive number.
pub fn parse_gamma(text: &str) -> Outcome<bilimor::bounds::GammaPolicy> {
    use bilimor::bounds::GammaPolicy;
    if text.eq_ignore_ascii_case("auto") {
        return Ok(GammaPolicy::Auto);
    }
    match text.parse::<f64>() {
        Ok(g) if g > 0.0 && g.is_finite() => Ok(GammaPolicy::Fixed(g)),
        _ => Err(Failure::config(format!("--gamma must be 'auto' or a positive number, got '{text}'"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepVar {
    Alpha,
    Gamma,
}

/// `alpha:A0:A1:STEPS` or `gamma:G0:G1:STEPS` into the variable and its points.
pub fn parse_sweep(text: &str) -> Outcome<(SweepVar, Vec<f64>)> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Failure::config(format!("--sweep must look like alpha:A0:A1:STEPS or gamma:G0:G1:STEPS, got '{text}'"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let var = match parts[0] {
        "alpha" => SweepVar::Alpha,
        "gamma" => SweepVar::Gamma,
        _ => return Err(bad()),
    };
    let lo: f64 = parts[1].parse().map_err(|_| bad())?;
    let hi: f64 = parts[2].parse().map_err(|_| bad())?;
    let steps: usize = parts[3].parse().map_err(|_| bad())?;
    if steps == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad());
    }
    if lo < 0.0 || (var == SweepVar::Gamma && lo <= 0.0) {
        return Err(Failure::config(format!("sweep range of {} must be positive", parts[0])));
    }
    let points = if steps == 1 {
        vec![lo]
    } else {
        (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
    };
    Ok((var, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_spec() {
        let (var, pts) = parse_sweep("alpha:0:4:17").unwrap();
        assert_eq!(var, SweepVar::Alpha);
        assert_eq!(pts.len(), 17);
        assert_eq!(pts[16], 4.0);
        assert_eq!(pts[4], 1.0);
        assert!(parse_sweep("gamma:0:3:4").is_err());
        assert!(parse_sweep("beta:1:2:3").is_err());
        assert!(parse_sweep("alpha:2:1:3").is_err());
    }

    #[test]
    fn gamma_and_vectors() {
        assert!(parse_gamma("AUTO").is_ok());
        assert!(parse_gamma("-1").is_err());
        assert_eq!(parse_vector("1, 2,3", 3).unwrap().len(), 3);
        assert!(parse_vector("1,2", 3).is_err());
    }
}
