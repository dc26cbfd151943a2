//! Command-level behavior: exit codes, file outputs, the normative CSV
//! format, overrides, and batch aggregation.

use std::path::Path;

use levelguard_cli::commands::{self, EXIT_ALARM, EXIT_ERROR, EXIT_OK};
use levelguard_cli::output::CSV_HEADER;
use levelguard_cli::scenario::ScenarioFile;

const QUIET_HOLD: &str = "\
[mpc]
horizon = 5

[sim]
x0 = [0.8, 0.8]
total_steps = 20
";

const ALARMING: &str = "\
[mpc]
horizon = 5

[[attack.segments]]
channel = \"output\"
index = 0
start = 10
end = 39
shape = \"step\"
magnitude = -0.3

[sim]
x0 = [0.8, 0.8]
total_steps = 40
";

fn write_scenario(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_log_and_summary_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "hold.toml", QUIET_HOLD);
    let out = dir.path().join("out");
    let code = commands::run_command(&scenario, &out, &[], true);
    assert_eq!(code, EXIT_OK);

    let csv = std::fs::read_to_string(out.join("log.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    assert_eq!(lines.count(), 20, "one row per step");

    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("alarm_step: none"));
    assert!(summary.contains("halted: completed"));
}

#[test]
fn csv_numbers_reparse_to_the_exact_run_values() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "hold.toml", QUIET_HOLD);
    let out = dir.path().join("out");
    assert_eq!(commands::run_command(&scenario, &out, &[], true), EXIT_OK);

    let log = levelguard::sim::run(
        &ScenarioFile::parse(QUIET_HOLD, &[]).unwrap().build().unwrap(),
    )
    .unwrap();

    let csv = std::fs::read_to_string(out.join("log.csv")).unwrap();
    for (line, rec) in csv.lines().skip(1).zip(&log.records) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 18);
        assert_eq!(fields[0].parse::<u64>().unwrap(), rec.k);
        let check = |s: &str, v: f64| {
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "field {s} vs {v}");
        };
        check(fields[1], rec.t);
        check(fields[2], rec.x_true.0[0]);
        check(fields[3], rec.x_true.0[1]);
        check(fields[4], rec.y_measured.0[0]);
        check(fields[5], rec.y_measured.0[1]);
        check(fields[6], rec.reference.0[0]);
        check(fields[7], rec.reference.0[1]);
        check(fields[8], rec.u_applied.0[0]);
        check(fields[9], rec.u_attack);
        check(fields[10], rec.y_attack[0]);
        check(fields[11], rec.y_attack[1]);
        check(fields[12], rec.residual);
        check(fields[13], rec.cusum);
        assert_eq!(fields[14], if rec.alarmed { "1" } else { "0" });
        check(fields[16], rec.solver_cost);
        check(fields[17], rec.constraint_violation);
    }
}

#[test]
fn alarming_scenario_exits_two_and_reports_the_alarm() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "attack.toml", ALARMING);
    let out = dir.path().join("out");
    let code = commands::run_command(&scenario, &out, &[], true);
    assert_eq!(code, EXIT_ALARM);
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("alarm_step: 11"), "summary:\n{summary}");
    assert!(summary.contains("detected, delay 1 steps"), "summary:\n{summary}");
}

#[test]
fn malformed_scenarios_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_key = write_scenario(dir.path(), "bad_key.toml", "[plant]\nalpha9 = 1.0\n");
    assert_eq!(commands::run_command(&bad_key, &out, &[], true), EXIT_ERROR);
    let bad_syntax = write_scenario(dir.path(), "bad_syntax.toml", "[plant\n");
    assert_eq!(commands::run_command(&bad_syntax, &out, &[], true), EXIT_ERROR);
    let missing = dir.path().join("missing.toml");
    assert_eq!(commands::run_command(&missing, &out, &[], true), EXIT_ERROR);
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "attack.toml", ALARMING);
    let out = dir.path().join("out");
    // wiping out the attack makes the run clean
    let code = commands::run_command(
        &scenario,
        &out,
        &["attack.segments.0.magnitude=0.0".into()],
        true,
    );
    assert_eq!(code, EXIT_OK);
}

#[test]
fn validate_checks_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_scenario(dir.path(), "good.toml", QUIET_HOLD);
    assert_eq!(commands::validate_command(&good), EXIT_OK);

    let overlap = write_scenario(
        dir.path(),
        "overlap.toml",
        "\
[[attack.segments]]
channel = \"input\"
start = 100
end = 200
shape = \"step\"
magnitude = 0.1

[[attack.segments]]
channel = \"output\"
start = 150
end = 250
shape = \"step\"
magnitude = -0.1
",
    );
    assert_eq!(commands::validate_command(&overlap), EXIT_ERROR);

    let bad_x0 = write_scenario(dir.path(), "bad_x0.toml", "[sim]\nx0 = [1.5, 0.0]\n");
    assert_eq!(commands::validate_command(&bad_x0), EXIT_ERROR);
}

#[test]
fn batch_runs_everything_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path(), "a_hold.toml", QUIET_HOLD);
    write_scenario(dir.path(), "b_attack.toml", ALARMING);
    write_scenario(dir.path(), "c_broken.toml", "[plant]\nalpha1 = -1.0\n");
    let out = dir.path().join("batch_out");
    let pattern = format!("{}/*.toml", dir.path().display());
    // the broken scenario is recorded, not fatal to the others
    let code = commands::batch_command(&[pattern], &out, true);
    assert_eq!(code, EXIT_ERROR);

    let batch = std::fs::read_to_string(out.join("batch.csv")).unwrap();
    let lines: Vec<&str> = batch.lines().collect();
    assert_eq!(lines[0], "scenario,alarmed,alarm_step,delay,max_h1,max_h2,false_positive,error");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("a_hold,0,"));
    assert!(lines[2].starts_with("b_attack,1,11,1,"));
    assert!(lines[3].starts_with("c_broken,,"));
    assert!(out.join("a_hold/log.csv").exists());
    assert!(out.join("b_attack/summary.txt").exists());

    // all-good batch exits zero
    let out2 = dir.path().join("batch_out2");
    let only_good = format!("{}/a_hold.toml", dir.path().display());
    assert_eq!(commands::batch_command(&[only_good], &out2, true), EXIT_OK);

    // nothing matched
    let none = format!("{}/nothing_*.toml", dir.path().display());
    assert_eq!(commands::batch_command(&[none], &out, true), EXIT_ERROR);
}

#[test]
fn fixed_seed_reruns_are_byte_identical() {
    let noisy = "\
[mpc]
horizon = 5

[noise]
kind = \"gaussian\"
std_dev = 0.002
seed = 42

[sim]
x0 = [0.8, 0.8]
total_steps = 25
";
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "noisy.toml", noisy);
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    assert_eq!(commands::run_command(&scenario, &out1, &[], true), EXIT_OK);
    assert_eq!(commands::run_command(&scenario, &out2, &[], true), EXIT_OK);
    let a = std::fs::read(out1.join("log.csv")).unwrap();
    let b = std::fs::read(out2.join("log.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn shipped_scenarios_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in [
        "fig2_no_defense.toml",
        "fig3_sensor_attack.toml",
        "fig4_noise.toml",
        "fig5_input_attack.toml",
    ] {
        let path = root.join(name);
        assert!(path.exists(), "missing shipped scenario {name}");
        assert_eq!(commands::validate_command(&path), EXIT_OK, "{name} must validate");
    }
}
