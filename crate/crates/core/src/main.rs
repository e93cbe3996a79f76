use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use oas_core::engine::to_db;
use oas_core::harness::{
    emit_results, run_oas_trial, run_sweep_with_workers, CellConfig, ExperimentSpec, OutputFormat, SweepResult,
};
use oas_core::rng::derive_seed;
use oas_core::{OasError, Result, StrategyKind};

#[derive(Parser)]
#[command(name = "oas", version, about = "Online adaptive sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write one row per (value, method).
    Sweep(CommonArgs),
    /// Run one adaptive trial at the base configuration and print its trajectory.
    Single {
        #[command(flatten)]
        common: CommonArgs,
        /// random, stepwise or exhaustive
        #[arg(long, default_value = "random")]
        strategy: String,
    },
    /// Run only the non-adaptive baselines (LASSO, exact MMSE, reference levels) over the sweep.
    Baseline(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment file; the built-in default is N = K = 200, L = 73, M = 80, S = 1000.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, env = "OAS_WORKERS")]
    workers: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    fixed_codebook: bool,
}

impl CommonArgs {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_file(path)?,
            None => ExperimentSpec::default(),
        };
        if let Some(seed) = self.seed {
            spec.master_seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
        if let Some(out) = &self.out {
            spec.output = Some(out.clone());
        }
        if let Some(format) = self.format {
            spec.format = format;
        }
        spec.fixed_codebook |= self.fixed_codebook;
        Ok(spec)
    }

    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn write_sweep(result: &SweepResult, spec: &ExperimentSpec) -> Result<()> {
    match &spec.output {
        Some(path) => emit_results(result, spec.format, path),
        None => {
            let stdout = std::io::stdout().lock();
            match spec.format {
                OutputFormat::Csv => result.write_csv(stdout),
                OutputFormat::Json => result.write_json(stdout),
            }
        }
    }
}

fn sweep(spec: ExperimentSpec, workers: usize) -> Result<bool> {
    let result = run_sweep_with_workers(&spec, workers)?;
    write_sweep(&result, &spec)?;
    for row in result.rows.iter().filter(|r| !r.valid) {
        eprintln!(
            "invalid cell {}={} {}: {} of {} trials failed",
            row.swept_param,
            row.value,
            row.method,
            row.failed,
            row.failed + row.trials
        );
    }
    Ok(!result.any_invalid())
}

#[derive(Serialize)]
struct SingleReport {
    n: usize,
    k: usize,
    l: usize,
    m: usize,
    s: usize,
    strategy: String,
    trial_seed: u64,
    resamples: u64,
    final_mse_db: f64,
    mse_db_per_subframe: Vec<f64>,
}

fn single(spec: ExperimentSpec, strategy: &str) -> Result<bool> {
    let kind = StrategyKind::parse(strategy)?;
    let cell = CellConfig::from_base(&spec.base);
    let trial_seed = derive_seed(spec.master_seed, &[0, 0]);
    let trial = run_oas_trial(&cell, kind, trial_seed, None)?;
    let report = SingleReport {
        n: cell.n,
        k: cell.k,
        l: cell.l,
        m: cell.m,
        s: cell.s,
        strategy: kind.name().into(),
        trial_seed,
        resamples: trial.resamples,
        final_mse_db: trial.result.final_mse_db(),
        mse_db_per_subframe: trial.result.mse_trajectory.iter().map(|&v| to_db(v)).collect(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| OasError::Config(e.to_string()))?;
    match &spec.output {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| OasError::Io {
            path: path.clone(),
            source: e,
        })?,
        None => {
            let _ = writeln!(std::io::stdout(), "{text}");
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep(args) => args.spec().and_then(|spec| sweep(spec, args.workers())),
        Command::Single { common, strategy } => common.spec().and_then(|spec| single(spec, &strategy)),
        Command::Baseline(args) => args.spec().and_then(|mut spec| {
            spec.strategies.clear();
            spec.baselines.lasso = true;
            spec.baselines.reference = true;
            sweep(spec, args.workers())
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
