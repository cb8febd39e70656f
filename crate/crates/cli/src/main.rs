use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use uplift_cli::{commands, config::ExperimentConfig};
use uplift_core::Result;

/// Uplift modeling experiments: twin-network training, classical
/// baselines, Qini/Kendall evaluation, and synthetic RCT generation.
#[derive(Parser)]
#[command(name = "uplift", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of repeated benchmark runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Worker pool size; 0 means available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Compute the literal Qini formula instead of the ATE-consistent one.
    #[arg(long)]
    qini_literal: bool,
    /// Number of Qini grid bins.
    #[arg(long)]
    qini_grid: Option<usize>,
    /// Number of Kendall quantile bins.
    #[arg(long)]
    kendall_bins: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (and its truth file in parametric mode).
    Simulate(CommonArgs),
    /// Run the alpha and learning-rate selection protocol.
    Tune(CommonArgs),
    /// Repeated-run comparison of the twin networks and the baselines.
    Benchmark(CommonArgs),
    /// Score a saved model file on a CSV dataset.
    Evaluate {
        /// Saved model file.
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn resolve(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    if let Some(runs) = common.runs {
        config.runs = runs;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if common.qini_literal {
        config.qini_literal = true;
    }
    if let Some(grid) = common.qini_grid {
        config.qini_grid = grid;
    }
    if let Some(bins) = common.kendall_bins {
        config.kendall_bins = bins;
    }
    Ok(config)
}

fn run(cli: Cli) -> std::result::Result<u8, (i32, String)> {
    let fail = |e: uplift_core::Error| (commands::exit_code_for(&e), e.to_string());
    match cli.command {
        Command::Simulate(common) => {
            let config = resolve(&common).map_err(fail)?;
            commands::cmd_simulate(&config).map_err(fail)?;
            Ok(0)
        }
        Command::Tune(common) => {
            let config = resolve(&common).map_err(fail)?;
            let outcome = commands::cmd_tune(&config).map_err(fail)?;
            if outcome.fallback {
                Ok(commands::EXIT_TUNE_FALLBACK as u8)
            } else {
                Ok(0)
            }
        }
        Command::Benchmark(common) => {
            let config = resolve(&common).map_err(fail)?;
            commands::cmd_benchmark(&config).map_err(fail)?;
            Ok(0)
        }
        Command::Evaluate {
            model,
            data,
            common,
        } => {
            let config = resolve(&common).map_err(fail)?;
            commands::cmd_evaluate(&config, &model, &data).map_err(fail)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout with success; everything
            // else is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
