//! The run / batch / validate entry points.
//!
//! Exit codes: 0 for a clean completion, 2 when an alarm was raised during a
//! `run`, 1 for any error (parse, validation, IO, or a failed scenario in a
//! batch).

use std::path::{Path, PathBuf};

use levelguard::sim::{self, RunLog};
use rayon::prelude::*;

use crate::output::{self, BatchRow};
use crate::scenario::ScenarioFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ALARM: i32 = 2;

fn scenario_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_and_run(path: &Path, overrides: &[String]) -> Result<RunLog, String> {
    let file = ScenarioFile::load(path, overrides)?;
    let config = file.build()?;
    sim::run(&config).map_err(|e| format!("run failed: {e}"))
}

/// Run one scenario; write `log.csv` and `summary.txt` into `output_dir`.
pub fn run_command(
    scenario_path: &Path,
    output_dir: &Path,
    overrides: &[String],
    quiet: bool,
) -> i32 {
    let name = scenario_name(scenario_path);
    let log = match load_and_run(scenario_path, overrides) {
        Ok(log) => log,
        Err(message) => {
            eprintln!("{}: {message}", scenario_path.display());
            return EXIT_ERROR;
        }
    };
    if let Err(e) = output::write_run_outputs(&name, &log, output_dir) {
        eprintln!("cannot write outputs to {}: {e}", output_dir.display());
        return EXIT_ERROR;
    }
    if !quiet {
        print!("{}", output::summary_text(&name, &log));
        println!("outputs: {}", output_dir.display());
    }
    if log.summary.alarm_step.is_some() {
        EXIT_ALARM
    } else {
        EXIT_OK
    }
}

/// Expand glob-ish patterns into scenario paths. Plain paths pass through;
/// patterns containing `*`, `?` or `[` go through the glob matcher.
pub fn expand_patterns(patterns: &[String]) -> Result<Vec<PathBuf>, String> {
    let mut paths = Vec::new();
    for pattern in patterns {
        if pattern.contains(['*', '?', '[']) {
            let matches =
                glob::glob(pattern).map_err(|e| format!("bad pattern \"{pattern}\": {e}"))?;
            for entry in matches {
                paths.push(entry.map_err(|e| format!("glob error: {e}"))?);
            }
        } else {
            paths.push(PathBuf::from(pattern));
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

/// Run every matching scenario (in parallel), writing per-scenario outputs
/// under `<output_dir>/<scenario_stem>/` plus an aggregate `batch.csv`.
/// A failing scenario is recorded in the aggregate and does not stop others.
pub fn batch_command(patterns: &[String], output_dir: &Path, quiet: bool) -> i32 {
    let paths = match expand_patterns(patterns) {
        Ok(paths) if !paths.is_empty() => paths,
        Ok(_) => {
            eprintln!("no scenarios matched");
            return EXIT_ERROR;
        }
        Err(message) => {
            eprintln!("{message}");
            return EXIT_ERROR;
        }
    };

    let rows: Vec<BatchRow> = paths
        .par_iter()
        .map(|path| {
            let name = scenario_name(path);
            let outcome = load_and_run(path, &[]).and_then(|log| {
                output::write_run_outputs(&name, &log, &output_dir.join(&name))
                    .map_err(|e| format!("cannot write outputs: {e}"))?;
                Ok(log)
            });
            BatchRow { scenario: name, outcome }
        })
        .collect();

    if let Err(e) = std::fs::create_dir_all(output_dir)
        .and_then(|_| std::fs::write(output_dir.join("batch.csv"), output::batch_csv_text(&rows)))
    {
        eprintln!("cannot write batch.csv: {e}");
        return EXIT_ERROR;
    }

    let mut failed = 0usize;
    for row in &rows {
        match &row.outcome {
            Ok(log) if !quiet => {
                println!(
                    "{}: {} steps, alarm {:?}",
                    row.scenario, log.summary.steps, log.summary.alarm_step
                );
            }
            Err(message) => {
                eprintln!("{}: {message}", row.scenario);
                failed += 1;
            }
            _ => {}
        }
    }
    if failed > 0 {
        EXIT_ERROR
    } else {
        EXIT_OK
    }
}

/// Parse and validate a scenario without running it.
pub fn validate_command(scenario_path: &Path) -> i32 {
    match ScenarioFile::load(scenario_path, &[]).and_then(|file| file.build()) {
        Ok(_) => {
            println!("{}: ok", scenario_path.display());
            EXIT_OK
        }
        Err(message) => {
            eprintln!("{}: {message}", scenario_path.display());
            EXIT_ERROR
        }
    }
}
