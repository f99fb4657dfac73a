mod commands;
mod library;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmorkit_core::config::SweepRange;
use pmorkit_core::interp::InterpMethod;
use pmorkit_core::{Error, Result};

/// Reduced-order modelling toolkit for a coupled chamber/windkessel model.
#[derive(Debug, Parser)]
#[command(name = "pmorkit", version)]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full-order simulation.
    #[command(subcommand)]
    Fom(FomCommand),
    /// Snapshot compression.
    #[command(subcommand)]
    Pod(PodCommand),
    /// Reduced-order simulation.
    #[command(subcommand)]
    Rom(RomCommand),
    /// Parametric sample libraries and interpolation sweeps.
    #[command(subcommand)]
    Pmor(PmorCommand),
    /// Parameter calibration.
    #[command(subcommand)]
    Invana(InvanaCommand),
    /// Plot-ready CSV tables for every study.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum FomCommand {
    Run(RunArgs),
}

#[derive(Debug, Subcommand)]
enum RomCommand {
    Run(RomRunArgs),
}

#[derive(Debug, Subcommand)]
enum PodCommand {
    Build(PodBuildArgs),
}

#[derive(Debug, Subcommand)]
enum PmorCommand {
    Build(PmorBuildArgs),
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
enum InvanaCommand {
    Run(InvanaArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Output directory.
    #[arg(long, default_value = "fom")]
    out: PathBuf,
    /// Physical activation parameter, e.g. `--set sigma=300`. Repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct RomRunArgs {
    /// Basis matrix file.
    #[arg(long)]
    basis: PathBuf,
    #[arg(long, default_value = "rom")]
    out: PathBuf,
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Full-order run directory to compare against.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PodBuildArgs {
    /// Snapshot matrix file (one column per time level).
    #[arg(long)]
    snapshots: PathBuf,
    /// Reduced order; defaults to the configured one.
    #[arg(long)]
    q: Option<usize>,
    /// Pick the order from the singular values instead of `--q`.
    #[arg(long)]
    eps_pod: Option<f64>,
    #[arg(long, default_value = "pod")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PmorBuildArgs {
    /// Library directory.
    #[arg(long, default_value = "library")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    library: PathBuf,
    /// Interpolation methods; defaults to the configured list.
    #[arg(long, value_delimiter = ',')]
    method: Vec<InterpMethod>,
    /// Normalized queries `lo:hi:count`; defaults to the configured range.
    #[arg(long)]
    range: Option<SweepRange>,
    /// Also emit the full-order reference row of every query.
    #[arg(long)]
    include_fom: bool,
    /// CSV file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InvanaArgs {
    /// `prom`, `fom` or `both`.
    #[arg(long, default_value = "prom")]
    gradients: commands::Gradients,
    #[arg(long, default_value = "invana")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Skip the calibration tables.
    #[arg(long)]
    no_invana: bool,
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("PMORKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("PMORKIT_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = commands::load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Fom(FomCommand::Run(a)) => commands::fom_run(&cfg, &a.set, &a.out),
        Command::Pod(PodCommand::Build(a)) => commands::pod_build(&cfg, &a.snapshots, a.q, a.eps_pod, &a.out),
        Command::Rom(RomCommand::Run(a)) => commands::rom_run(&cfg, &a.basis, &a.set, a.reference.as_deref(), &a.out),
        Command::Pmor(PmorCommand::Build(a)) => commands::pmor_build(&cfg, &a.out),
        Command::Pmor(PmorCommand::Sweep(a)) => {
            commands::pmor_sweep(cli.config.is_some().then_some(&cfg), &a.library, &a.method, a.range, a.include_fom, a.out.as_deref())
        }
        Command::Invana(InvanaCommand::Run(a)) => commands::invana_run(&cfg, a.gradients, &a.out),
        Command::Report(a) => commands::report(&cfg, &a.out, !a.no_invana),
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
