use bilimor::bounds::step_options;
use bilimor::linalg::Vector;
use bilimor::simulate::{control_grid, integrate_bilinear_with};

use crate::args::SimulateArgs;
use crate::artifact::Artifacts;
use crate::control::{build_control, load_system, parse_vector};
use crate::failure::{Failure, Outcome};

pub fn run(args: &SimulateArgs, out: &Artifacts) -> Outcome<()> {
    let sys = load_system(&args.system)?;
    if !(args.t_end > 0.0) || !(args.dt > 0.0) || !args.t_end.is_finite() {
        return Err(Failure::config("--t-end and --dt must be positive"));
    }
    let n = sys.state_dim();
    let x0 = args.x0.as_deref().map(|s| parse_vector(s, n)).transpose()?.unwrap_or_else(|| Vector::zeros(n));
    let u = build_control(&args.control, sys.input_dim())?;
    let grid = control_grid(&u, args.t_end, args.dt);
    let traj = integrate_bilinear_with(&sys, &u, &x0, &grid, &step_options(&sys))?;
    out.csv("trajectory.csv", &traj.to_csv(args.states))
}
