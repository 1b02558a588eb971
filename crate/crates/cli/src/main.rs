//! `lz-landscape`: reproducible experiments on Landau-Zener control landscapes.

mod commands;
mod error;
mod inputs;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AppendixArgs, Context, NoiseArgs, OptimizeArgs, Output, QslArgs, ScanArgs, TrapProbArgs};
use error::{CliError, CliResult};
use manifest::{resolve_timestamp, RunManifest};

#[derive(Parser)]
#[command(
    name = "lz-landscape",
    version,
    about = "Control landscape experiments for the Landau-Zener system"
)]
struct Cli {
    /// Worker threads for parallel runs (results do not depend on it).
    #[arg(long, global = true, env = "LZ_WORKERS")]
    workers: Option<usize>,
    /// Timestamp recorded in the manifest (default: SOURCE_DATE_EPOCH or now).
    #[arg(long, global = true)]
    timestamp: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Objective over a grid of one- or two-segment pulses (CSV).
    Scan {
        #[command(flatten)]
        args: ScanArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One BFGS ascent (JSON).
    Optimize {
        #[command(flatten)]
        args: OptimizeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trapping probability over random starts, per segment count (CSV).
    TrapProb {
        #[command(flatten)]
        args: TrapProbArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every run record here (JSON).
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Predicted versus Monte Carlo decrease under white control noise (CSV).
    Noise {
        #[command(flatten)]
        args: NoiseArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Second variations around the zero control (JSON).
    Appendix {
        #[command(flatten)]
        args: AppendixArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantum speed limit estimate (JSON).
    Qsl {
        #[command(flatten)]
        args: QslArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun the manifest at the head of an output file.
    Replay {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let ctx = || -> CliResult<Context> {
        Ok(Context {
            workers,
            timestamp: resolve_timestamp(cli.timestamp.as_deref())?,
        })
    };
    let finish = |output: Output, out: Option<PathBuf>| -> CliResult<u8> {
        emit(&output.text, out.as_deref())?;
        Ok(output.exit)
    };
    match cli.command {
        Command::Scan { args, out } => finish(commands::scan(&args, &ctx()?)?, out),
        Command::Optimize { args, out } => finish(commands::optimize(&args, &ctx()?)?, out),
        Command::TrapProb { args, out, records } => {
            let (csv, dump) = commands::trap_prob(&args, &ctx()?)?;
            if let Some(path) = records {
                emit(&dump, Some(&path))?;
            }
            finish(csv, out)
        }
        Command::Noise { args, out } => finish(commands::noise(&args.resolve()?, &ctx()?)?, out),
        Command::Appendix { args, out } => finish(commands::appendix(&args, &ctx()?)?, out),
        Command::Qsl { args, out } => finish(commands::qsl(&args, &ctx()?)?, out),
        Command::Replay { input, out } => {
            let text =
                std::fs::read_to_string(&input).map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?;
            let manifest = RunManifest::extract(&text)?;
            finish(commands::replay(&manifest, workers)?, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("lz-landscape: {e}");
            e.exit_code()
        }
    }
}
