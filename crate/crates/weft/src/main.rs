//! Command-line harness for the simulated runtime.
//!
//! `weft run <program>` executes one of the built-in example programs on a
//! simulated multi-node runtime and prints a `key=value` summary;
//! `weft gen-file` writes the little-endian integer fixture files the
//! file-oriented programs consume; `weft list` shows what can be run.
//!
//! Exit codes: 0 success, 2 usage error, 3 deadlock detected, 4 runtime
//! error, 5 I/O error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use weft::{run_builtin, Outcome, PartitionImpl, Placement, RunConfig, RunMode, RuntimeError};

#[derive(Parser)]
#[command(name = "weft", version, about = "Deterministic simulation of a distributed task-dataflow runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in program and print its summary
    Run {
        /// Program name (see `weft list`)
        program: String,
        /// Number of simulated nodes
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        nodes: u32,
        /// Seed for the message-interleaving schedule
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// When remote creations hand out usable identifiers
        #[arg(long, value_enum, default_value_t = ModeArg::Deferred)]
        mode: ModeArg,
        /// Where created objects live
        #[arg(long, value_enum, default_value_t = PlacementArg::RoundRobin)]
        placement: PlacementArg,
        /// How partition-kind bulk copies move bytes
        #[arg(long, value_enum, default_value_t = PartitionImplArg::ZeroCopy)]
        partition_impl: PartitionImplArg,
        /// Write the scheduling trace to this file
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Host file for programs that read or write one
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Write a fixture file of 32-bit little-endian values 1..=COUNT
    GenFile {
        /// File to write
        path: PathBuf,
        /// Number of 32-bit values
        count: u32,
    },
    /// List the built-in programs
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Eager,
    Deferred,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Local,
    RoundRobin,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionImplArg {
    Eager,
    ZeroCopy,
}

const EXIT_USAGE: u8 = 2;
const EXIT_DEADLOCK: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_IO: u8 = 5;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            program,
            nodes,
            seed,
            mode,
            placement,
            partition_impl,
            trace,
            fixture,
        } => {
            let cfg = RunConfig {
                program,
                nodes,
                seed,
                mode: match mode {
                    ModeArg::Eager => RunMode::Eager,
                    ModeArg::Deferred => RunMode::Deferred,
                },
                placement: match placement {
                    PlacementArg::Local => Placement::Local,
                    PlacementArg::RoundRobin => Placement::RoundRobin,
                },
                partition_impl: match partition_impl {
                    PartitionImplArg::Eager => PartitionImpl::Eager,
                    PartitionImplArg::ZeroCopy => PartitionImpl::ZeroCopy,
                },
                trace,
                fixture,
            };
            run_command(cfg)
        }
        Command::GenFile { path, count } => gen_file(&path, count),
        Command::List => {
            for (name, description) in weft::programs::builtin_registry().program_names() {
                println!("{name}  {description}");
            }
            ExitCode::SUCCESS
        }
    }
}

fn run_command(cfg: RunConfig) -> ExitCode {
    let trace_path = cfg.trace.clone();
    let summary = match run_builtin(cfg) {
        Ok(s) => s,
        Err(e) => {
            // An unknown program name is a usage mistake, not a runtime failure.
            eprintln!("error: {e}");
            eprintln!("hint: `weft list` prints the registered program names");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(path) = trace_path {
        if let Err(e) = write_lines(&path, &summary.trace) {
            eprintln!("error: cannot write trace to {}: {e}", path.display());
            return ExitCode::from(EXIT_IO);
        }
    }
    print!("{summary}");
    match summary.outcome {
        Outcome::Success => ExitCode::SUCCESS,
        Outcome::DeadlockDetected => ExitCode::from(EXIT_DEADLOCK),
        Outcome::Error(RuntimeError::Io(_)) => ExitCode::from(EXIT_IO),
        Outcome::Error(_) => ExitCode::from(EXIT_RUNTIME),
    }
}

fn gen_file(path: &PathBuf, count: u32) -> ExitCode {
    let mut bytes = Vec::with_capacity(count as usize * 4);
    for v in 1..=count {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    match std::fs::write(path, bytes) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", path.display());
            ExitCode::from(EXIT_IO)
        }
    }
}

fn write_lines(path: &PathBuf, lines: &[String]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}
