use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zeno_lab::config::{Mode, OutputFormat, RunConfig};
use zeno_lab::error::{Error, Result};
use zeno_lab::runner;
use zeno_lab::validate::run_suite;

#[derive(Parser)]
#[command(
    name = "zeno-lab",
    version,
    about = "Measured driven-qubit simulator and Zeno rate analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Selective trajectories: pulsed_traj, continuous_traj or poisson_ensemble.
    Simulate(RunArgs),
    /// Nonselective evolution (default mode ensemble_ode).
    Ensemble(RunArgs),
    /// P_1 heatmap over a measurement-rate grid (mode sweep_heatmap).
    Sweep(RunArgs),
    /// Mixing rates and Zeno response over a grid (mode rates_scan).
    Rates(RunArgs),
    /// Run the invariant suite.
    Validate,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "ZENO_LAB_WORKERS")]
    workers: Option<usize>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one key, e.g. `--set gamma=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn allowed(command: &Command) -> (&'static [Mode], Option<Mode>) {
    match command {
        Command::Simulate(_) => (&[Mode::PulsedTraj, Mode::ContinuousTraj, Mode::PoissonEnsemble], None),
        Command::Ensemble(_) => (
            &[
                Mode::EnsembleOde,
                Mode::PoissonEnsemble,
                Mode::PulsedTraj,
                Mode::ContinuousTraj,
            ],
            Some(Mode::EnsembleOde),
        ),
        Command::Sweep(_) => (&[Mode::SweepHeatmap], Some(Mode::SweepHeatmap)),
        Command::Rates(_) => (&[Mode::RatesScan], Some(Mode::RatesScan)),
        Command::Validate => (&[], None),
    }
}

fn build_config(args: &RunArgs, command: &Command) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        cfg.apply_text(&text)?;
    }
    for kv in &args.set {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(Error::Configuration("--workers must be >= 1".into()));
        }
        cfg.workers = Some(w);
    }
    if let Some(f) = &args.format {
        cfg.format = if f == "json" {
            OutputFormat::Json
        } else {
            OutputFormat::Csv
        };
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    let (modes, default) = allowed(command);
    if cfg.mode.is_none() {
        cfg.mode = default;
    }
    match cfg.mode {
        Some(m) if !modes.contains(&m) => Err(Error::Configuration(format!(
            "mode {} is not available from this subcommand",
            m.name()
        ))),
        None => Err(Error::Configuration(format!(
            "no mode given; choose one of {}",
            modes.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
        ))),
        Some(_) => Ok(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Validate => {
            let results = run_suite(|r| println!("{}", r.line()));
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {} failed", results.len(), failed);
            return if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
        Command::Simulate(a) | Command::Ensemble(a) | Command::Sweep(a) | Command::Rates(a) => a,
    };
    let result = build_config(args, &cli.command).and_then(|cfg| runner::run(&cfg));
    match result {
        Ok(summary) => {
            eprintln!("{}", summary.line());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
