//! CSV log, text summary, and batch aggregate writers.
//!
//! The per-run log format is fixed: one row per step under the exact header
//! below, every float printed with 17 significant digits so values re-parse
//! bit-exactly and reruns with the same seed are byte-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use levelguard::sim::{DetectionVerdict, HaltReason, RunLog};

pub const CSV_HEADER: &str =
    "k,t,x1,x2,y1,y2,ytilde1,ytilde2,u,ua,ya1,ya2,residual,cusum,alarm,status,cost,violation";

/// 17 significant digits: enough to identify any f64 uniquely.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn log_csv_text(log: &RunLog) -> String {
    let mut out = String::with_capacity(64 + log.records.len() * 340);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for rec in &log.records {
        let status = match rec.solver_status {
            Some(s) => s.to_string(),
            None => "halted".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            rec.k,
            fmt_num(rec.t),
            fmt_num(rec.x_true.0[0]),
            fmt_num(rec.x_true.0[1]),
            fmt_num(rec.y_measured.0[0]),
            fmt_num(rec.y_measured.0[1]),
            fmt_num(rec.reference.0[0]),
            fmt_num(rec.reference.0[1]),
            fmt_num(rec.u_applied.0[0]),
            fmt_num(rec.u_attack),
            fmt_num(rec.y_attack[0]),
            fmt_num(rec.y_attack[1]),
            fmt_num(rec.residual),
            fmt_num(rec.cusum),
            u8::from(rec.alarmed),
            status,
            fmt_num(rec.solver_cost),
            fmt_num(rec.constraint_violation),
        );
    }
    out
}

pub fn summary_text(name: &str, log: &RunLog) -> String {
    let s = &log.summary;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {name}");
    let _ = writeln!(out, "steps: {}", s.steps);
    let _ = writeln!(
        out,
        "halted: {}",
        match s.halted {
            HaltReason::Completed => "completed",
            HaltReason::Alarm => "alarm",
        }
    );
    match s.alarm_step {
        Some(k) => {
            let _ = writeln!(out, "alarm_step: {k}");
        }
        None => {
            let _ = writeln!(out, "alarm_step: none");
        }
    }
    match s.attack_onset {
        Some(k) => {
            let _ = writeln!(out, "attack_onset: {k}");
        }
        None => {
            let _ = writeln!(out, "attack_onset: none");
        }
    }
    let _ = writeln!(
        out,
        "detection: {}",
        match s.verdict {
            DetectionVerdict::NoAlarm => "no alarm".to_string(),
            DetectionVerdict::Detected { delay, .. } => format!("detected, delay {delay} steps"),
            DetectionVerdict::FalseAlarm { alarm_step } =>
                format!("false positive (alarm at {alarm_step} before any attack)"),
        }
    );
    let _ = writeln!(
        out,
        "max_state: {} {}",
        fmt_num(s.max_state[0]),
        fmt_num(s.max_state[1])
    );
    let _ = writeln!(
        out,
        "final_state: {} {}",
        fmt_num(s.final_state.0[0]),
        fmt_num(s.final_state.0[1])
    );
    out
}

pub fn write_run_outputs(name: &str, log: &RunLog, output_dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(output_dir)?;
    let mut csv = std::fs::File::create(output_dir.join("log.csv"))?;
    csv.write_all(log_csv_text(log).as_bytes())?;
    let mut summary = std::fs::File::create(output_dir.join("summary.txt"))?;
    summary.write_all(summary_text(name, log).as_bytes())?;
    Ok(())
}

/// One line of the batch aggregate.
pub struct BatchRow {
    pub scenario: String,
    pub outcome: Result<RunLog, String>,
}

pub const BATCH_HEADER: &str =
    "scenario,alarmed,alarm_step,delay,max_h1,max_h2,false_positive,error";

pub fn batch_csv_text(rows: &[BatchRow]) -> String {
    let mut out = String::new();
    out.push_str(BATCH_HEADER);
    out.push('\n');
    for row in rows {
        match &row.outcome {
            Ok(log) => {
                let s = &log.summary;
                let alarm = s.alarm_step.map(|k| k.to_string()).unwrap_or_default();
                let delay = match s.verdict {
                    DetectionVerdict::Detected { delay, .. } => delay.to_string(),
                    _ => String::new(),
                };
                let false_positive =
                    u8::from(matches!(s.verdict, DetectionVerdict::FalseAlarm { .. }));
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},",
                    row.scenario,
                    u8::from(s.alarm_step.is_some()),
                    alarm,
                    delay,
                    fmt_num(s.max_state[0]),
                    fmt_num(s.max_state[1]),
                    false_positive,
                );
            }
            Err(message) => {
                let _ = writeln!(
                    out,
                    "{},,,,,,,{}",
                    row.scenario,
                    message.replace([',', '\n'], ";"),
                );
            }
        }
    }
    out
}
