use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lambda_fv::harness::{read_manifest, run_experiment, verify_manifest, ExperimentConfig, Stage, SUMMARY_FILE};

/// Simulation and diagnostics for Lambda-coalescents and lookdown
/// Lambda-Fleming-Viot processes.
#[derive(Parser)]
#[command(name = "lambda-fv-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Rate table lambda[b][k] with per-row totals.
    Rates(RunArgs),
    /// Coalescent paths from n singletons.
    SimulateCoalescent(RunArgs),
    /// Lookdown trajectories: snapshots and event logs.
    SimulateLookdown(RunArgs),
    /// Coming-down-from-infinity verdicts, T_m estimates and tail conditions.
    Cdi(RunArgs),
    /// Modulus-of-continuity envelope over dyadic pairs.
    Modulus(RunArgs),
    /// Box-counting dimension of the support.
    Dimension(RunArgs),
    /// Radius profile from a start at the origin.
    Radius(RunArgs),
    /// Box-counting dimension of the range over a window.
    Range(RunArgs),
    /// Print the manifest and summary of a finished run.
    Report {
        /// Output directory of the run.
        #[arg(long, conflicts_with = "config")]
        out: Option<PathBuf>,
        /// Config whose output directory to read.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(args: &RunArgs, stage: Stage) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    config.stages = vec![stage];
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run(args: &RunArgs, stage: Stage) -> Result<()> {
    let config = load(args, stage)?;
    let manifest = run_experiment(&config).with_context(|| format!("{} failed", stage.as_str()))?;
    if stage == Stage::Rates {
        let totals = std::fs::read_to_string(config.output_dir.join("rate_totals.csv"))?;
        print!("{totals}");
    }
    println!("{} finished in {:.2}s", stage.as_str(), manifest.wall_seconds);
    for f in &manifest.files {
        println!("  {}  {}", &f.sha256[..12], config.output_dir.join(&f.path).display());
    }
    Ok(())
}

fn report(out: Option<PathBuf>, config: Option<PathBuf>) -> Result<()> {
    let dir = match (out, config) {
        (Some(dir), _) => dir,
        (None, Some(path)) => ExperimentConfig::load(&path)?.output_dir,
        (None, None) => bail!("report needs --out or --config"),
    };
    let manifest = read_manifest(&dir)?;
    println!("run `{}`  seed {}  version {}", manifest.name, manifest.seed, manifest.toolkit_version);
    println!("config sha256 {}", manifest.config_hash);
    for s in &manifest.stages {
        println!("  {:<20} {:>8.2}s", s.stage.as_str(), s.wall_seconds);
    }
    let broken = verify_manifest(&dir, &manifest);
    println!("{} files, {} failing checksum", manifest.files.len(), broken.len());
    for path in &broken {
        println!("  MISMATCH {}", path.display());
    }
    let summary = std::fs::read_to_string(dir.join(SUMMARY_FILE)).context("reading summary")?;
    println!("{summary}");
    if !broken.is_empty() {
        bail!("checksum mismatch");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rates(a) => run(a, Stage::Rates),
        Command::SimulateCoalescent(a) => run(a, Stage::SimulateCoalescent),
        Command::SimulateLookdown(a) => run(a, Stage::SimulateLookdown),
        Command::Cdi(a) => run(a, Stage::Cdi),
        Command::Modulus(a) => run(a, Stage::Modulus),
        Command::Dimension(a) => run(a, Stage::Dimension),
        Command::Radius(a) => run(a, Stage::Radius),
        Command::Range(a) => run(a, Stage::Range),
        Command::Report { out, config } => report(out.clone(), config.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
