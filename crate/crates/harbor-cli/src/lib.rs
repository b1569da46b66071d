//! Command implementations behind the `harbor` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::PathBuf;

use harbor_core::runio::{
    execute_run, regenerate_reports, replay_verify, validate_config, RunIoError, RunRequest,
    TransportMode,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

fn exit_code_for(err: &RunIoError) -> i32 {
    match err {
        RunIoError::Config(_) | RunIoError::OutputExists(_) => EXIT_USAGE,
        RunIoError::Io { .. }
        | RunIoError::Experiment(_)
        | RunIoError::Replay(_)
        | RunIoError::Transport(_) => EXIT_RUNTIME,
    }
}

pub struct RunArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub parallel: usize,
    pub transport: String,
    pub fixtures: Option<PathBuf>,
    pub force: bool,
}

pub fn parse_transport(
    name: &str,
    fixtures: Option<PathBuf>,
) -> Result<TransportMode, (i32, String)> {
    match name {
        "live" => Ok(TransportMode::Live),
        "emulated" => Ok(TransportMode::Emulated),
        "mock" => {
            let fixtures = fixtures.ok_or((
                EXIT_USAGE,
                "--transport mock requires --fixtures <path>".to_string(),
            ))?;
            Ok(TransportMode::Mock { fixtures })
        }
        "record" => {
            let fixtures = fixtures.ok_or((
                EXIT_USAGE,
                "--transport record requires --fixtures <path>".to_string(),
            ))?;
            Ok(TransportMode::Record { fixtures })
        }
        other => Err((
            EXIT_USAGE,
            format!("unknown transport {other:?}; expected live, mock, record or emulated"),
        )),
    }
}

/// Runs an experiment config (or re-executes a manifest). Returns the exit
/// code and prints a short completion report.
pub fn cmd_run(args: RunArgs) -> i32 {
    if !args.config.exists() {
        eprintln!("error: config file {} does not exist", args.config.display());
        return EXIT_USAGE;
    }
    let transport = match parse_transport(&args.transport, args.fixtures) {
        Ok(mode) => mode,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    let request = RunRequest {
        config_path: args.config,
        out_dir: args.out,
        seed: args.seed,
        parallel: args.parallel,
        transport,
        force: args.force,
        capture_contexts: false,
        base_override: None,
    };
    match execute_run(request) {
        Ok(artifacts) => {
            let runs: usize = artifacts.outcomes.iter().map(|o| o.runs.len()).sum();
            println!(
                "run {} complete: {} setting(s), {} auction run(s), {} llm call(s)",
                artifacts.manifest.run_id,
                artifacts.outcomes.len(),
                runs,
                artifacts.manifest.llm_call_count
            );
            println!("artifacts: {}", artifacts.run_dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Verifies persisted event logs against their recorded settlements.
pub fn cmd_replay(path: PathBuf) -> i32 {
    if !path.exists() {
        eprintln!("error: {} does not exist", path.display());
        return EXIT_USAGE;
    }
    match replay_verify(&path) {
        Ok(checks) => {
            let mut failures = 0;
            for check in &checks {
                match &check.result {
                    Ok(()) => println!("OK {}", check.label),
                    Err(e) => {
                        failures += 1;
                        println!("DIVERGENCE {}: {e}", check.label);
                    }
                }
            }
            if failures == 0 {
                println!("replay OK: {} log(s) verified", checks.len());
                EXIT_OK
            } else {
                eprintln!("replay failed: {failures} of {} log(s) diverged", checks.len());
                EXIT_RUNTIME
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Regenerates CSV reports and prints the summary table for a run dir.
pub fn cmd_report(dir: PathBuf) -> i32 {
    if !dir.exists() {
        eprintln!("error: {} does not exist", dir.display());
        return EXIT_USAGE;
    }
    match regenerate_reports(&dir) {
        Ok(summary) => {
            print!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Lints a config file: schema, agent specs, catalog feasibility.
pub fn cmd_validate(path: PathBuf) -> i32 {
    if !path.exists() {
        eprintln!("error: config file {} does not exist", path.display());
        return EXIT_USAGE;
    }
    match validate_config(&path) {
        Ok(experiment) => {
            println!(
                "config ok: experiment {:?} with {} setting(s)",
                experiment.name,
                experiment.settings.len()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
