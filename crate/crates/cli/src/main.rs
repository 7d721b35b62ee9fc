//! `fabseq`: optimize, simulate, check and export fabrication sequences.

mod commands;
mod summary;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "FABSEQ_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fabseq", version, about = "Fabrication sequence optimization for multi-axis additive manufacturing")]
struct Cli {
    /// Worker threads (0 = all cores). Overrides FABSEQ_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded run with reproducible logs.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize the time field and write all run artifacts.
    Optimize(OptimizeArgs),
    /// Forward simulation of a given (or planar) time field.
    Simulate(SimulateArgs),
    /// Compare adjoint gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a time field and its simulated response for visualization.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the iteration count.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Time field file; planar layers when omitted.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Projection sharpness of the smoothed simulation.
    #[arg(long)]
    beta: Option<f64>,
    /// Directory for the result summary and fields.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long)]
    config: PathBuf,
    /// Use the run's own grid instead of the configured check grid.
    #[arg(long)]
    full: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Vtk,
    Voxel,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    config: PathBuf,
    /// Time field file; planar layers when omitted.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "vtk")]
    format: Format,
    /// Output file (VTK) or base name (voxel).
    #[arg(long)]
    out: PathBuf,
    /// Export accumulated displacements after every stage.
    #[arg(long)]
    stages: bool,
}

fn thread_count(cli: &Cli) -> Result<usize> {
    if cli.deterministic {
        return Ok(1);
    }
    if let Some(n) = cli.threads {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("{THREADS_ENV}={v:?} is not a thread count: {e}")),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = match thread_count(&cli) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = fabseq::par::with_threads(threads, || match &cli.command {
        Command::Optimize(a) => commands::optimize(&a.config, a.out.as_deref(), a.max_iters),
        Command::Simulate(a) => commands::simulate(&a.config, a.field.as_deref(), a.beta, a.out.as_deref()),
        Command::Gradcheck(a) => commands::gradcheck(&a.config, a.full),
        Command::Export(a) => commands::export(
            &a.config,
            a.field.as_deref(),
            a.format == Format::Vtk,
            &a.out,
            a.stages,
        ),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
