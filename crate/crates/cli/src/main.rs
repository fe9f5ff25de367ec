//! `gslope`: fit Group SLOPE models, generate tuning sequences and run
//! Monte-Carlo studies.

mod commands;
mod error;
mod io;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser)]
#[command(name = "gslope", version, about = "Group SLOPE regression with group-FDR control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write fit.json and effects.csv.
    Solve(SolveArgs),
    /// Fit with σ estimated alongside the model (same as `solve --estimate-sigma`).
    EstimateSigma(SolveArgs),
    /// Generate a tuning sequence.
    Lambdas(LambdaArgs),
    /// Run a Monte-Carlo scenario.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Max,
    Mean,
    CorrectedEqual,
    CorrectedGeneral,
}

impl From<Method> for gslope::LambdaMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Max => gslope::LambdaMethod::Max,
            Method::Mean => gslope::LambdaMethod::Mean,
            Method::CorrectedEqual => gslope::LambdaMethod::CorrectedEqual,
            Method::CorrectedGeneral => gslope::LambdaMethod::CorrectedGeneral,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    SqrtRank,
    Unit,
    Rank,
}

impl From<Weights> for gslope::WeightMode {
    fn from(w: Weights) -> Self {
        match w {
            Weights::SqrtRank => gslope::WeightMode::SqrtRank,
            Weights::Unit => gslope::WeightMode::Unit,
            Weights::Rank => gslope::WeightMode::Rank,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Design matrix, n rows of p values.
    #[arg(long)]
    x: PathBuf,
    /// Response, one value per line.
    #[arg(long)]
    y: PathBuf,
    /// `column_index,group_id` rows, 1-based column indices.
    #[arg(long)]
    groups: PathBuf,
    /// `group_id,weight` rows overriding --weights-mode.
    #[arg(long, conflicts_with = "weights_mode")]
    weights: Option<PathBuf>,
    /// Weights derived from group ranks.
    #[arg(long, value_enum, default_value = "sqrt-rank")]
    weights_mode: Weights,
    /// Tuning sequence, one value per group in nonincreasing order.
    #[arg(long, conflicts_with = "lambda_method", required_unless_present = "lambda_method")]
    lambda: Option<PathBuf>,
    /// Generate the tuning sequence instead of reading it.
    #[arg(long, value_enum, requires = "q")]
    lambda_method: Option<Method>,
    /// Target group FDR for --lambda-method.
    #[arg(long)]
    q: Option<f64>,
    /// Known noise level.
    #[arg(long, conflicts_with = "estimate_sigma", default_value_t = 1.0)]
    sigma: f64,
    /// Estimate σ alternately with the fit.
    #[arg(long)]
    estimate_sigma: bool,
    /// Leave the intercept out of the σ-estimation regressions.
    #[arg(long)]
    no_intercept: bool,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    infeas_tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    /// Relative singular-value cutoff for group ranks.
    #[arg(long, default_value_t = gslope::groups::DEFAULT_RANK_TOL)]
    rank_tol: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LambdaArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    q: f64,
    /// Number of groups; required with --rank.
    #[arg(long)]
    m: Option<usize>,
    /// Sample size, required by the corrected methods.
    #[arg(long)]
    n: Option<usize>,
    /// One rank per line.
    #[arg(long, conflicts_with = "rank", required_unless_present = "rank")]
    ranks: Option<PathBuf>,
    /// Common rank of all groups.
    #[arg(long, requires = "m")]
    rank: Option<usize>,
    #[arg(long, value_enum, default_value = "sqrt-rank")]
    weights: Weights,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file or the name of a bundled scenario.
    #[arg(required_unless_present = "list")]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Scale m and n by the scenario's full-size factor.
    #[arg(long)]
    full_size: bool,
    /// Override the number of replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "GSLOPE_THREADS")]
    threads: Option<usize>,
    /// List bundled scenarios.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result: Result<(), CliError> = match cli.command {
        Command::Solve(args) => commands::solve(args, false),
        Command::EstimateSigma(args) => commands::solve(args, true),
        Command::Lambdas(args) => commands::lambdas(args),
        Command::Simulate(args) => commands::simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
