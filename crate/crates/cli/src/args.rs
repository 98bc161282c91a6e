use std::path::PathBuf;

use biharmonic_core::verify::Suite;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "biharmonic",
    version,
    about = "Radial solutions of Δ²u + u^(-q) = 0 in R^3"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate one initial-value problem and classify it.
    #[command(allow_negative_numbers = true)]
    Solve(SolveArgs),
    /// Locate the threshold β⋆ by bisection, using the cache when possible.
    #[command(allow_negative_numbers = true)]
    Shoot(ShootArgs),
    /// Map a trajectory into the 4D phase space and report the critical points.
    #[command(allow_negative_numbers = true)]
    Phase(PhaseArgs),
    /// Growth constant, second-order correction and phase convergence rate.
    #[command(allow_negative_numbers = true)]
    Asymptote(AsymptoteArgs),
    /// Rescale a global solution to a prescribed growth constant.
    #[command(allow_negative_numbers = true)]
    Scale(ScaleArgs),
    /// Run verification suites.
    #[command(allow_negative_numbers = true)]
    Verify(VerifyArgs),
    /// Solve many (q, β) pairs in parallel.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BetaArgs {
    #[arg(long)]
    pub q: f64,
    /// Δu(0).
    #[arg(
        long,
        conflicts_with = "beta_above_star",
        required_unless_present = "beta_above_star"
    )]
    pub beta: Option<f64>,
    /// Offset added to the cached β⋆ for this q.
    #[arg(long)]
    pub beta_above_star: Option<f64>,
    /// u(0).
    #[arg(long, default_value_t = 1.0)]
    pub u0: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct IntegrationArgs {
    #[arg(long, default_value_t = 1e5)]
    pub r_stop: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    #[arg(long, default_value_t = 40)]
    pub samples_per_decade: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CacheArgs {
    /// β⋆ cache file (JSON); without it the cache lives in memory only.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Bracket width for threshold searches.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Classification horizon for threshold searches.
    #[arg(long, default_value_t = 1e5)]
    pub horizon: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutputArgs {
    /// CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report; also printed to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub beta: BetaArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ShootArgs {
    #[arg(long)]
    pub q: f64,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub beta: BetaArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Critical points with their spectra (JSON).
    #[arg(long)]
    pub fixed_points: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AsymptoteArgs {
    #[command(flatten)]
    pub beta: BetaArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub beta: BetaArgs,
    /// Growth constant ϖ of the rescaled solution.
    #[arg(long)]
    pub target: f64,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub cache: CacheArgs,
    /// CSV of the rescaled trajectory.
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// Suites to run; all of them by default.
    #[arg(long, value_delimiter = ',')]
    #[serde(serialize_with = "suite_names")]
    pub suite: Vec<Suite>,
    #[arg(long, value_delimiter = ',')]
    pub q_list: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    /// Offset above β⋆ of the global runs.
    #[arg(long, default_value_t = 1.0)]
    pub beta_offset: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn suite_names<S: serde::Serializer>(suites: &[Suite], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(suites.iter().map(|x| x.name()))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub q_list: Vec<f64>,
    /// Absolute values of Δu(0).
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "offsets",
        required_unless_present = "offsets"
    )]
    pub beta_list: Option<Vec<f64>>,
    /// Offsets above β⋆, resolved per q.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub offsets: Option<Vec<f64>>,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub cache: CacheArgs,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for one trajectory CSV per job.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
