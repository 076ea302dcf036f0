use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tegma_core::{LambdaGrid, LossConvention, Method};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "tegma",
    version,
    about = "Robust sparse precision estimation for tensor data"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for experiments.
    #[arg(long, global = true, env = "TEGMA_JOBS")]
    jobs: Option<usize>,
    /// Experiment config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Loss convention for evaluation.
    #[arg(long, global = true, value_parser = parse_convention)]
    convention: Option<LossConvention>,
    /// Allow the very expensive model 2.
    #[arg(long, global = true)]
    slow_ok: bool,
}

fn parse_convention(s: &str) -> Result<LossConvention, String> {
    s.parse().map_err(|e: tegma_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: tegma_core::Error| e.to_string())
}

fn parse_dist(s: &str) -> Result<tegma_core::DistSpec, String> {
    s.parse().map_err(|e: tegma_core::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw samples from a simulation model and write them with the truth.
    Simulate(SimulateArgs),
    /// Estimate the per-mode precision matrices of a sample.
    Estimate(EstimateArgs),
    /// Run a seeded Monte Carlo experiment and write a results CSV.
    Experiment(ExperimentArgs),
    /// Choose penalties by validation likelihood or cross-validation.
    Tune(TuneArgs),
    /// Score estimated precisions against a simulated truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Model id (1-6).
    #[arg(long)]
    model: u8,
    /// normal, t3 or mixed.
    #[arg(long, default_value = "normal", value_parser = parse_dist)]
    dist: tegma_core::DistSpec,
    #[arg(long, short)]
    n: usize,
    #[arg(long, value_enum, default_value_t = FileFormat::Ten)]
    format: FileFormat,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FileFormat {
    Ten,
    Tenb,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Standardize {
    None,
    Entrywise,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum CenterArg {
    /// The method's default (spatial median for SSS, mean otherwise).
    Default,
    Median,
    Mean,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Explicit penalty grid (comma separated), used for every mode.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["grid_count", "grid_lo", "grid_hi"])]
    grid: Option<Vec<f64>>,
    /// Points in the relative grid.
    #[arg(long)]
    grid_count: Option<usize>,
    /// Smallest multiplier of the largest off-diagonal scatter entry.
    #[arg(long)]
    grid_lo: Option<f64>,
    /// Largest multiplier of the largest off-diagonal scatter entry.
    #[arg(long)]
    grid_hi: Option<f64>,
}

impl GridArgs {
    fn grid(&self) -> LambdaGrid {
        if let Some(values) = &self.grid {
            return LambdaGrid::Explicit {
                values: values.clone(),
            };
        }
        let LambdaGrid::Relative { count, lo, hi } = LambdaGrid::default() else {
            unreachable!()
        };
        LambdaGrid::Relative {
            count: self.grid_count.unwrap_or(count),
            lo: self.grid_lo.unwrap_or(lo),
            hi: self.grid_hi.unwrap_or(hi),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct PrepArgs {
    #[arg(long, default_value = "SSS", value_parser = parse_method)]
    method: Method,
    /// Entrywise z-scoring across samples before estimation.
    #[arg(long, value_enum, default_value_t = Standardize::Entrywise)]
    standardize: Standardize,
    #[arg(long, value_enum, default_value_t = CenterArg::Default, conflicts_with = "center_file")]
    center: CenterArg,
    /// Known center tensor (.ten/.tenb), in the units of the standardized data.
    #[arg(long)]
    center_file: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Sample files (.ten, .tenb, or .csv with one vector per row) or directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    prep: PrepArgs,
    /// Penalty per mode (comma separated); a single value applies to all modes.
    /// Without it, penalties are tuned.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Validation samples for tuning; without them, cross-validation is used.
    #[arg(long, num_args = 1.., conflicts_with = "lambda")]
    validation: Option<Vec<PathBuf>>,
    /// Cross-validation folds when tuning without a validation set.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Zero off-diagonal entries with magnitude below this.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Model id (1-6); required without --config.
    #[arg(long)]
    model: Option<u8>,
    #[arg(long, value_parser = parse_dist)]
    dist: Option<tegma_core::DistSpec>,
    #[arg(long, short)]
    n: Option<usize>,
    #[arg(long)]
    n_validation: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Training samples (files or directories).
    #[arg(long, required = true, num_args = 1..)]
    train: Vec<PathBuf>,
    /// Validation samples; omit to cross-validate with --folds.
    #[arg(long, num_args = 1..)]
    validation: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    prep: PrepArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory holding omega_<k>.csv estimates.
    #[arg(long)]
    estimate: PathBuf,
    /// Directory holding sigma_<k>.csv and omega_<k>.csv truth files.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = tegma_core::evaluation::DEFAULT_ZERO_TOL)]
    zero_tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(&cli.global, a),
        Command::Estimate(a) => commands::estimate(&cli.global, a),
        Command::Experiment(a) => commands::experiment(&cli.global, a),
        Command::Tune(a) => commands::tune(&cli.global, a),
        Command::Eval(a) => commands::eval(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
