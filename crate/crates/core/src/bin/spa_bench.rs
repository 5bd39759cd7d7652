//! Benchmark CLI: run experiment configs, certify trace directories, and
//! list the embedded monitoring-game fixtures.
//!
//! Exit codes: 0 — everything passed; 1 — at least one certificate failed;
//! 2 — configuration or input error (also used by clap for usage errors).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spa_bandits::bench::{certify_dir, run_experiment, ExperimentConfig, RunOptions, FIXTURES};
use spa_bandits::Error;

#[derive(Parser)]
#[command(
    name = "spa-bench",
    version,
    about = "Benchmark harness for stability-penalty-adaptive FTRL agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config end to end and evaluate its certificates.
    Run {
        /// Path to a TOML experiment config.
        config: PathBuf,
        /// Replace the config's episode set with episodes 0..N.
        #[arg(long, value_name = "N")]
        seeds: Option<u64>,
        /// Worker threads; 0 uses all cores, 1 forces serial execution.
        #[arg(long, default_value_t = 0, value_name = "P")]
        parallel: usize,
        /// Directory for trace files and the summary report.
        #[arg(long, default_value = "bench-out", value_name = "DIR")]
        out: PathBuf,
    },
    /// Recompute every certificate from a directory of trace files.
    Certify {
        /// Directory holding `*.csv` traces with their `*.json` sidecars.
        trace_dir: PathBuf,
    },
    /// List the monitoring-game fixtures embedded in this binary.
    ListFixtures,
}

fn dispatch(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            parallel,
            out,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let base = config.parent().filter(|p| !p.as_os_str().is_empty());
            let opts = RunOptions {
                out_dir: out,
                parallel,
                episodes_override: seeds,
            };
            let report = run_experiment(&cfg, base.unwrap_or(Path::new(".")), &opts)?;
            print!("{}", report.render_text());
            Ok(report.overall_pass)
        }
        Command::Certify { trace_dir } => {
            let report = certify_dir(&trace_dir)?;
            print!("{}", report.render_text());
            Ok(report.overall_pass)
        }
        Command::ListFixtures => {
            for fx in FIXTURES {
                println!("{:<22} {}", fx.name, fx.summary);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more certificates failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
