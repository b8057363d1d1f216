use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_cbf::sim::FilterMode;
use robust_cbf_cli::{load_config, run_command, trace_command, CliError, Mode, RunOptions};

#[derive(Parser)]
#[command(name = "robust-cbf", version, about = "Robust CBF safety filter: circle-swap runs and metric export")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every iteration of a scenario and export metrics.
    Run {
        /// Scenario file (TOML).
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for parallel iterations.
        #[arg(long)]
        jobs: Option<usize>,
        /// Exit with status 3 when the robust run breaches the safety floor.
        #[arg(long)]
        check: bool,
    },
    /// Write the min-h trace of one run as `t,min_h` CSV.
    Trace {
        config: PathBuf,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "robust")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            mode,
            out,
            seed,
            jobs,
            check,
        } => {
            let cfg = load_config(&config)?;
            let report = run_command(&cfg, &out, &RunOptions { mode, seed, jobs, check })?;
            for (mode, s) in &report.summaries {
                println!(
                    "{:<10} violation {:.3} s  avg wct {:.4} ms  goal completion {:.3}",
                    robust_cbf_cli::commands::mode_dir(*mode),
                    s.violation_time_s,
                    s.avg_wct_ms,
                    s.goal_completion
                );
            }
            Ok(())
        }
        Command::Trace { config, out, mode, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let filter_mode = match mode {
                Mode::Robust => FilterMode::Robust,
                Mode::NonRobust => FilterMode::NonRobust,
                Mode::Both => {
                    return Err(CliError::Config(robust_cbf_cli::ConfigError::Invalid {
                        field: "--mode".into(),
                        reason: "trace takes robust or non-robust".into(),
                    }))
                }
            };
            trace_command(&cfg, &out, filter_mode)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
