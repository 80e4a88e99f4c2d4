//! Batch experiment runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 verification failure,
//! 4 i/o error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use obsim::config::{validate, ExperimentConfig};
use obsim::runner::{run, RunError};
use obsim::scheduler::LogBase;

#[derive(Parser)]
#[command(
    name = "obsim",
    about = "Feedback-limited opportunistic beamforming simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the task described by a config file.
    Run {
        /// Path to the TOML experiment config.
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<u64>,
        /// Output directory (default: config `out_dir`, then `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rate unit: nats or bits.
        #[arg(long, value_name = "nats|bits")]
        log_base: Option<String>,
        /// Worker thread count. Does not change any result, only wall time.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List config diagnostics without executing anything.
    Validate { config: PathBuf },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let config = match load_config(&config) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("{msg}");
                    return ExitCode::from(2);
                }
            };
            let diags = validate(&config);
            if diags.is_empty() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                for d in &diags {
                    println!("{d}");
                }
                ExitCode::from(2)
            }
        }
        Command::Run {
            config,
            seed,
            trials,
            out,
            log_base,
            jobs,
        } => {
            if let Some(jobs) = jobs {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build_global()
                {
                    eprintln!("cannot configure {jobs} workers: {e}");
                    return ExitCode::from(2);
                }
            }
            let mut config = match load_config(&config) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("{msg}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(trials) = trials {
                config.trials = trials;
            }
            match log_base.as_deref() {
                Some("nats") => config.log_base = LogBase::Nats,
                Some("bits") => config.log_base = LogBase::Bits,
                Some(other) => {
                    eprintln!("unknown log base `{other}` (use nats or bits)");
                    return ExitCode::from(2);
                }
                None => {}
            }
            let out_dir = out
                .or_else(|| config.out_dir.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            match run(&config, &out_dir) {
                Ok(bundle) => {
                    println!("config {}", bundle.config_hash);
                    for line in &bundle.summary {
                        println!("{line}");
                    }
                    for path in &bundle.outputs {
                        println!("wrote {}", path.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    match e {
                        RunError::Config(_) => ExitCode::from(2),
                        RunError::Verification(_) => ExitCode::from(3),
                        RunError::Io(_) => ExitCode::from(4),
                    }
                }
            }
        }
    }
}
