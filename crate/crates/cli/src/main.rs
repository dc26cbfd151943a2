use std::path::PathBuf;

use clap::{Parser, Subcommand};
use levelguard_cli::commands;

/// Closed-loop level-control simulator with built-in attack detection.
#[derive(Parser)]
#[command(name = "levelguard", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file; writes log.csv and summary.txt.
    ///
    /// Exits 0 on a clean run, 2 when an alarm was raised, 1 on error.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Output directory (default: $LEVELGUARD_OUTPUT or ./out).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Dot-path override, e.g. --set mpc.horizon=15 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Suppress the summary on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Run every matching scenario and aggregate the results in batch.csv.
    Batch {
        /// Scenario paths or glob patterns (quote globs to bypass the shell).
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Output directory (default: $LEVELGUARD_OUTPUT or ./out).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Suppress per-scenario lines on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and validate a scenario file without running it.
    Validate {
        /// Scenario TOML file.
        scenario: PathBuf,
    },
}

fn default_output() -> PathBuf {
    std::env::var_os("LEVELGUARD_OUTPUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario, output, set, quiet } => {
            commands::run_command(&scenario, &output.unwrap_or_else(default_output), &set, quiet)
        }
        Command::Batch { scenarios, output, quiet } => {
            commands::batch_command(&scenarios, &output.unwrap_or_else(default_output), quiet)
        }
        Command::Validate { scenario } => commands::validate_command(&scenario),
    };
    std::process::exit(code);
}
