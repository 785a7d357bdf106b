//! Command-line arguments. Every argument struct doubles as the serialized
//! run configuration; the output directory is excluded so that identical
//! runs into different directories hash identically.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "bilimor", version, about = "Reduction and output-error bounds for bilinear control systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Generate a system bundle (toy, heat or random).
    Gen(GenArgs),
    /// Reduce a system bundle and write the reduced bundle.
    Reduce(ReduceArgs),
    /// Output or output-error bounds, optionally swept over α or γ.
    Bound(BoundArgs),
    /// Simulate a trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Run property suites; exits with code 4 on any failure.
    Validate(ValidateArgs),
    /// Monte Carlo second-moment check.
    Mc(McArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Toy,
    Heat,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Hurwitz `A`, bilinear part unscaled.
    Hurwitz,
    /// Bilinear part halved until mean-square stable.
    Ms,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    /// Interior mesh size ñ of the heat benchmark (n = ñ²).
    #[arg(long = "nn", default_value_t = 10)]
    pub nn: usize,
    /// State dimension of a random system.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Target::Ms)]
    pub target: Target,
    /// Prescribed mean-square spectral radius of a random system (overrides --target).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Skip the stability analysis in gen.json (useful for large meshes).
    #[arg(long)]
    pub skip_stability: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Bt,
    Spa,
    Irka,
}

#[derive(Args, Debug, Serialize)]
pub struct ReduceArgs {
    /// System bundle directory or manifest.
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub order: usize,
    /// `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    pub gamma: String,
    /// IRKA start: `bt` or `random:SEED`.
    #[arg(long, default_value = "bt")]
    pub irka_init: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub maxit: usize,
    /// Also write the full-order Gramians of the rescaled system.
    #[arg(long)]
    pub export_gramians: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Control signal selection shared by several subcommands.
#[derive(Args, Debug, Serialize)]
pub struct ControlArgs {
    /// `toy` (two channels on [0, 1], unit L² norm), `zero`, or a CSV file
    /// of samples `t,u_1,..,u_m` interpolated linearly.
    #[arg(long, default_value = "toy")]
    pub control: String,
    /// Scaling of the control; for `toy` this is its L² norm.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// Reduced bundle; when given the output-error bound is computed.
    #[arg(long)]
    pub rom: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub control: ControlArgs,
    #[arg(long, default_value = "auto")]
    pub gamma: String,
    /// `alpha:A0:A1:STEPS` or `gamma:G0:G1:STEPS`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Skip the simulated supremum.
    #[arg(long)]
    pub no_simulate: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub control: ControlArgs,
    #[arg(long = "t-end", default_value_t = 5.0)]
    pub t_end: f64,
    /// Output sampling interval.
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    /// Comma-separated initial state; zero when omitted.
    #[arg(long)]
    pub x0: Option<String>,
    /// Include state columns.
    #[arg(long)]
    pub states: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Gronwall,
    Traces,
    Stability,
}

#[derive(Args, Debug, Serialize)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random systems per suite.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct McArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "t-end", default_value_t = 1.0)]
    pub t_end: f64,
    /// Euler–Maruyama step.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Comma-separated initial state; all ones when omitted.
    #[arg(long)]
    pub x0: Option<String>,
    /// Also estimate the mean-square decay rate over this horizon.
    #[arg(long)]
    pub decay_horizon: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

impl Command {
    pub fn out_dir(&self) -> &PathBuf {
        match self {
            Command::Gen(a) => &a.out,
            Command::Reduce(a) => &a.out,
            Command::Bound(a) => &a.out,
            Command::Simulate(a) => &a.out,
            Command::Validate(a) => &a.out,
            Command::Mc(a) => &a.out,
        }
    }
}
