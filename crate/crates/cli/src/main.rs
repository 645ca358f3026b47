use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nysopt_cli::config::{self, DiagnoseConfig, ExperimentConfig, ParsedConfig};
use nysopt_cli::diagnose::run_diagnostics;
use nysopt_cli::experiment::{run_experiment, CliOverrides};

#[derive(Parser)]
#[command(name = "nysopt", version, about = "Nystrom-preconditioned stochastic optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a config file.
    Run {
        config: PathBuf,
        /// Concurrent grid cells; defaults to the number of cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory, overriding `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep Nystrom approximation quality over the configured m grid.
    Diagnose {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config file without running anything.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, workers, out, seed } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail_config(&e),
            };
            let ov = CliOverrides { workers, out, seed };
            match run_experiment(cfg, &ov) {
                Ok(outcome) => {
                    let s = &outcome.summary;
                    eprintln!(
                        "{} runs, {} failed, wrote {}",
                        s.runs.len(),
                        s.failures.len(),
                        outcome.out_dir.join("summary.json").display()
                    );
                    if outcome.all_completed {
                        ExitCode::SUCCESS
                    } else {
                        for id in &s.failures {
                            eprintln!("failed: {id}");
                        }
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail_config(&e),
            }
        }
        Command::Diagnose { config, out } => {
            let cfg = match DiagnoseConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail_config(&e),
            };
            match run_diagnostics(cfg, out) {
                Ok(outcome) => {
                    eprintln!(
                        "{} sweep rows, wrote {} and {}",
                        outcome.rows,
                        outcome.sweep_csv.display(),
                        outcome.closeness_csv.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail_config(&e),
            }
        }
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => return fail_config(&nysopt::Error::Io(e)),
            };
            match config::parse_any(&text) {
                Ok(ParsedConfig::Experiment(_)) => {
                    eprintln!("ok: experiment config");
                    ExitCode::SUCCESS
                }
                Ok(ParsedConfig::Diagnose(_)) => {
                    eprintln!("ok: diagnose config");
                    ExitCode::SUCCESS
                }
                Err(e) => fail_config(&e),
            }
        }
    }
}

fn fail_config(e: &nysopt::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}
