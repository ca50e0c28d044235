//! `hslab` command-line interface.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numeric failure.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::validate_config;
use runner::run_experiment;

#[derive(Parser)]
#[command(name = "hslab", version, about = "Eigen-decomposition pricing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        /// Path to the JSON experiment config.
        config: PathBuf,
        /// Worker-thread hint; results are identical for any value.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory prepended to the config's output prefix.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Validate a JSON config without running it.
    Validate {
        /// Path to the JSON experiment config.
        config: PathBuf,
    },
    /// Print the version.
    Version,
}

fn seed_override() -> Option<u64> {
    std::env::var("HSLAB_SEED").ok().and_then(|s| s.parse().ok())
}

fn load(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {path:?}: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!("hslab {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::Validate { config } => {
            let text = match load(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match validate_config(&text, seed_override()) {
                Ok(_) => {
                    println!("ok");
                    ExitCode::SUCCESS
                }
                Err(errors) => {
                    for e in &errors {
                        eprintln!("invalid: {e}");
                    }
                    ExitCode::from(2)
                }
            }
        }
        Command::Run {
            config,
            threads,
            out,
        } => {
            if let Some(n) = threads {
                // A worker hint only; estimates do not depend on it.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let text = match load(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let cfg = match validate_config(&text, seed_override()) {
                Ok(c) => c,
                Err(errors) => {
                    for e in &errors {
                        eprintln!("invalid: {e}");
                    }
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&cfg, &out) {
                Ok(report) => {
                    print!("{}", report.summary);
                    for f in &report.curve_files {
                        println!("wrote {}", f.display());
                    }
                    println!("wrote {}", report.summary_file.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
    }
}
