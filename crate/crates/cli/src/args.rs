use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Fractal basin boundaries of ODE systems: integrate ensembles, detect
/// boundary cells by perturbation and estimate their box-counting dimension.
#[derive(Debug, Parser)]
#[command(name = "chaoscope", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate random initial conditions and store the trajectories.
    Solve(SolveArgs),
    /// Count boundary cells at one perturbation size.
    Boxcount(BoxcountArgs),
    /// Estimate the boundary dimension over a range of perturbation sizes.
    Fdim(FdimArgs),
    /// Box-counting dimension of a self-similar family or a point set.
    Fractal(FractalArgs),
    /// Seconds per trajectory, native against the compiled plugin.
    Bench(BenchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Native,
    Plugin,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON job request supplying any of the options below; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// System definition file.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Override a parameter, e.g. `--param R=20`. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Initial-condition region, e.g. `x=-1.001..1.001,y=-1.001..1.001,z=21.999..22.001`.
    #[arg(long, allow_hyphen_values = true)]
    pub region: Option<String>,
    #[arg(long)]
    pub number_ic: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Calculation step of the integrator.
    #[arg(long)]
    pub t_calc_step: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Compiler template for the plugin, with `{exe}` and `{src}` placeholders.
    #[arg(long)]
    pub compile_command: Option<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Run store root; defaults to $CHAOSCOPE_STORE, then ./chaoscope-store.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Print the full result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Two-class colouring of final states, e.g. `x<0`.
    #[arg(long, allow_hyphen_values = true)]
    pub predicate: Option<String>,
    /// `t0..t1`
    #[arg(long, allow_hyphen_values = true)]
    pub t_range: Option<String>,
    /// Spacing of stored samples, a whole multiple of the calculation step.
    #[arg(long)]
    pub t_plot_step: Option<f64>,
    /// Write a 2-D projection of the trajectories as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Projection axes for `--svg`; `t` is allowed.
    #[arg(long, default_value = "x,y")]
    pub svg_vars: String,
}

#[derive(Debug, Args)]
pub struct CellArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub predicate: Option<String>,
    #[arg(long)]
    pub final_time: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    /// Perturbed copies per base initial condition.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoxcountArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cells: CellArgs,
    /// Half-edge of the perturbation cube.
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FdimArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cells: CellArgs,
    /// `lo..hi`
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon_range: Option<String>,
    #[arg(long)]
    pub n_epsilons: Option<usize>,
    /// Write the regression points as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FractalArgs {
    /// Branches per level.
    #[arg(long, short = 'b', conflicts_with = "points")]
    pub branches: Option<u64>,
    /// Scale divisor per level.
    #[arg(long, short = 's', conflicts_with = "points")]
    pub scale: Option<u64>,
    /// Levels.
    #[arg(long, short = 'm', conflicts_with = "points")]
    pub iterations: Option<u32>,
    /// CSV of points in the unit hypercube.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Cell sizes for `--points`, comma separated; default 3^-1 .. 3^-6.
    #[arg(long)]
    pub deltas: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Initial condition, comma separated; default all 0.5.
    #[arg(long, allow_hyphen_values = true)]
    pub ic: Option<String>,
    #[arg(long, default_value = "0..37", allow_hyphen_values = true)]
    pub t_range: String,
    #[arg(long, default_value_t = 0.005)]
    pub t_calc_step: f64,
    /// Repetitions per method.
    #[arg(long, short = 'r', default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long)]
    pub compile_command: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = chaoscope_service::DEFAULT_ADDR)]
    pub addr: String,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Allowed UI origin; any origin when omitted.
    #[arg(long)]
    pub cors_origin: Option<String>,
}
