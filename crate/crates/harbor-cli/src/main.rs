use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harbor_cli::{cmd_replay, cmd_report, cmd_run, cmd_validate, RunArgs};

/// Persona-driven multi-agent English auction simulator.
#[derive(Parser)]
#[command(name = "harbor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (or re-execute a run manifest).
    Run {
        /// Experiment config JSON, or a previous run's manifest.json.
        config: PathBuf,
        /// Output directory; the run writes to <out>/<run_id>.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the base seed (setting i runs with seed + i).
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum concurrent auction runs.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Transport: live, mock, record or emulated.
        #[arg(long, default_value = "emulated")]
        transport: String,
        /// Fixture file for mock (read) and record (write) transports.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Overwrite an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Verify persisted event logs replay to their recorded settlements.
    Replay {
        /// A run directory (with manifest.json) or a single events.jsonl.
        path: PathBuf,
    },
    /// Regenerate CSV reports and print the summary table for a run.
    Report {
        /// A completed run directory.
        dir: PathBuf,
    },
    /// Lint an experiment config against its catalog.
    Validate {
        /// Experiment config JSON.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            parallel,
            transport,
            fixtures,
            force,
        } => cmd_run(RunArgs {
            config,
            out,
            seed,
            parallel,
            transport,
            fixtures,
            force,
        }),
        Command::Replay { path } => cmd_replay(path),
        Command::Report { dir } => cmd_report(dir),
        Command::Validate { config } => cmd_validate(config),
    };
    ExitCode::from(code as u8)
}
