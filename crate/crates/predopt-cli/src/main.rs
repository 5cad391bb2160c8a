//! `predopt` binary: validate experiment configs and run experiments.
//!
//! Exit codes: 0 on success, 1 for configuration problems (unreadable or
//! invalid config file), 2 for runtime failures (solver, training, or I/O
//! errors mid-run).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use predopt_cli::config::parse_config;
use predopt_cli::experiment::{execute_run, timing_report, RunOptions};

#[derive(Parser)]
#[command(name = "predopt", version, about = "Decision-focused learning experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config, appending one CSV row per
    /// repetition × method to results.csv in the output directory.
    Run {
        /// Experiment config file (key = value lines).
        config: PathBuf,
        /// Override the config's worker-pool size (0 = one per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory for results.csv and saved datasets.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the config's base seed (changes the fingerprint).
        #[arg(long)]
        seed: Option<u64>,
        /// Instead of running, time the first method across worker-pool
        /// sizes 1, 2, 4, 8 and write timing.txt.
        #[arg(long)]
        timing: bool,
        /// Save each repetition's train/test datasets (.dfld) next to the
        /// results.
        #[arg(long)]
        save_data: bool,
    },
    /// Statically validate a config file, listing every violation.
    Validate {
        /// Experiment config file (key = value lines).
        config: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<predopt_cli::config::ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(1)
    })?;
    parse_config(&text).map_err(|errors| {
        eprintln!("invalid config {}:", path.display());
        for e in &errors {
            eprintln!("  - {e}");
        }
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, workers, out, seed, timing, save_data } => {
            let mut cfg = match load_config(&config) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            // Overrides land before fingerprinting, so rows carry the
            // identity of what actually ran.
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let opts = RunOptions { out_dir: out, save_data };
            if timing {
                return match timing_report(&cfg, &opts) {
                    Ok(table) => {
                        print!("{table}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::from(2)
                    }
                };
            }
            match execute_run(&cfg, &opts) {
                Ok(summary) => {
                    for r in &summary.results {
                        let unambiguous = r
                            .report
                            .normalized_unambiguous_regret
                            .map(|v| format!(" unambiguous {v:.6}"))
                            .unwrap_or_default();
                        println!(
                            "rep {} {:<12} regret {:.6}{unambiguous} mse {:.6} acc {:.4} \
                             ({:.2}s)",
                            r.repetition,
                            r.method,
                            r.report.normalized_regret,
                            r.report.mse,
                            r.report.solution_accuracy,
                            r.total_seconds,
                        );
                    }
                    println!(
                        "{} rows appended to {} (config {})",
                        summary.results.len(),
                        summary.csv_path.display(),
                        summary.fingerprint,
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("ok: fingerprint {}", cfg.fingerprint());
                print!("{}", cfg.canonical());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
    }
}
