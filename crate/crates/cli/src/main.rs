mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gaugeopt::harness::ExperimentName;

/// Default cap on enumerated subsets and slices.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Gauge and gauge_p functions, sparse learning machines and recovery
/// certificates over finite atom alphabets.
///
/// Alphabets are given as a JSON file or a shorthand: canonical:d,
/// spiral:n, spca:d,k,count,seed or waves:n,width.
#[derive(Debug, Parser)]
#[command(name = "gaugeopt", version, about, long_about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (default: number of cores). GAUGEOPT_THREADS overrides it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Seed for every random choice made by the command.
    #[arg(long, global = true, value_name = "SEED")]
    pub seed: Option<u64>,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the gauge, or gauge_p when --p is given.
    Gauge(GaugeArgs),
    /// Solve a learning machine.
    Solve(SolveArgs),
    /// Check the recovery conditions for a model under a sensing operator.
    Certify(CertifyArgs),
    /// Smallest number of linearly dependent atoms.
    Spark(SparkArgs),
    /// Run an experiment and write its CSV.
    Experiment(ExperimentArgs),
    /// Render median-error curves from a trial CSV as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct GaugeArgs {
    /// Alphabet file or shorthand.
    #[arg(long, value_name = "ALPHABET")]
    pub alphabet: String,
    /// Point to evaluate, comma separated.
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    pub x: String,
    /// Largest slice size; omit for the convex gauge.
    #[arg(long, value_name = "P")]
    pub p: Option<usize>,
    /// Maximum number of subsets to enumerate.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Dual alternating for warm starts, then branch-and-bound.
    Auto,
    /// Exhaustive search over all supports of size p.
    Oracle,
    /// Dual alternating alone.
    DualAlt,
    /// Branch-and-bound without warm starts.
    Bnb,
    /// The convex machine; p is ignored.
    Convex,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem JSON with fields sensing (rows), y, psi and p.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["alphabet", "y", "psi", "p"])]
    pub problem: Option<PathBuf>,
    /// Alphabet file or shorthand; the sensing operator is the identity.
    #[arg(long, value_name = "ALPHABET", requires_all = ["y", "psi", "p"])]
    pub alphabet: Option<String>,
    /// Observation, comma separated.
    #[arg(long, value_name = "Y", allow_hyphen_values = true)]
    pub y: Option<String>,
    /// Budget on the sum of coefficients.
    #[arg(long, value_name = "PSI")]
    pub psi: Option<f64>,
    /// Largest support size.
    #[arg(long, value_name = "P")]
    pub p: Option<usize>,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    /// Penalty weight for dual alternating (default: scaled to the problem).
    #[arg(long, value_name = "GAMMA")]
    pub gamma: Option<f64>,
    /// Wall-clock limit for branch-and-bound, in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub time_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Alphabet file or shorthand.
    #[arg(long, value_name = "ALPHABET")]
    pub alphabet: String,
    /// Sensing matrix JSON (array of rows), identity, or gaussian:m.
    #[arg(long, value_name = "SENSING")]
    pub sensing: String,
    /// True model, comma separated.
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    pub xsharp: String,
    /// Largest slice size.
    #[arg(long, value_name = "P")]
    pub p: usize,
    /// Grid resolution for the critical cone angle; omit to skip it.
    #[arg(long, value_name = "N")]
    pub grid_res: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SparkArgs {
    /// Alphabet file or shorthand.
    #[arg(long, value_name = "ALPHABET")]
    pub alphabet: String,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// sparse_pca, superres, phase_transition or spiral_gauges.
    #[arg(long, value_name = "NAME")]
    pub name: Option<ExperimentName>,
    /// JSON config; fields left out take the experiment's defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Trials per cell.
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// Output CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Trial CSV written by the experiment command.
    #[arg(long, value_name = "FILE")]
    pub csv: PathBuf,
    /// Output .svg file, or a directory for one file per noise level.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flag values or combinations: exit 2.
    Usage(String),
    /// The inputs were read but the computation cannot succeed: exit 1.
    Domain(String),
}

impl CliError {
    pub fn domain(e: impl std::fmt::Display) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = commands::configure_threads(cli.threads).and_then(|()| commands::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
