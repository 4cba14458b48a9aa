use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hydro-reserve"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn export(dir: &Path, fixture: &str) -> PathBuf {
    let path = dir.join(format!("{fixture}.json"));
    ok(&["export-system", "--fixture", fixture, "--out", path.to_str().unwrap()]);
    path
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_names_solver() {
    let out = ok(&["--version"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("HiGHS"), "{text}");
}

#[test]
fn deterministic_schedule_covers_static_requirement() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "synthetic");
    let out = tmp.path().join("det");
    ok(&["solve", "--model", "det", "--system", s(&sys), "--reserve-req", "42", "--out", s(&out)]);
    let rows = csv_rows(&out.join("reserve.csv"));
    assert_eq!(rows[0], ["module", "period", "reserve_mw", "run_id"]);
    let mut per_period = vec![0.0; 24];
    for r in &rows[1..] {
        per_period[r[1].parse::<usize>().unwrap()] += r[2].parse::<f64>().unwrap();
    }
    assert!(per_period.iter().all(|&r| r >= 42.0 - 1e-6), "{per_period:?}");
    let m = manifest(&out);
    let id = m["run_id"].as_str().unwrap();
    assert!(rows[1..].iter().all(|r| r[3] == id));
    assert_eq!(m["settings"]["model"], "det");
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o == "schedule.csv"));
}

#[test]
fn mixed_without_beta_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "c2");
    let out = run(&["solve", "--model", "mixed", "--system", s(&sys), "--lambda", "5", "--gamma", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], 2);
    assert!(err["error"]["message"].as_str().unwrap().contains("--beta"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["solve", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "validation");
}

#[test]
fn infeasible_requirement_is_a_solver_error() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "c1");
    let out = run(&["solve", "--model", "det", "--system", s(&sys), "--reserve-req", "15", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("reserve requirement"));
}

#[test]
fn generated_scenarios_feed_the_mixed_model() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "c2");
    let gen = tmp.path().join("gen");
    ok(&["generate-scenarios", "--system", s(&sys), "--count", "50", "--dist", "normal", "--seed", "7", "--lambda", "5", "--out", s(&gen)]);
    let rows = csv_rows(&gen.join("scenarios.csv"));
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0][..3], ["scenario", "probability", "origin"]);

    // J produced by a robust run, then reused without CCG.
    let rob = tmp.path().join("rob");
    ok(&["solve", "--model", "robust", "--system", s(&sys), "--lambda", "5", "--gamma", "2", "--out", s(&rob)]);
    assert!(rob.join("trace.csv").exists());
    let mixed = tmp.path().join("mixed");
    ok(&[
        "solve", "--model", "mixed", "--beta", "0.9", "--system", s(&sys),
        "--scenarios", s(&gen.join("scenarios.csv")),
        "--robust-scenarios", s(&rob.join("robust_scenarios.csv")),
        "--out", s(&mixed),
    ]);
    let m = manifest(&mixed);
    assert_eq!(m["settings"]["robust_scenarios"]["source"], "file");
    assert!(!mixed.join("trace.csv").exists());
    assert!(m["results"]["ccg_iterations"].is_null());
}

#[test]
fn simulate_writes_one_row_per_sample() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "c2");
    let out = tmp.path().join("sim");
    ok(&[
        "simulate", "--model", "stoch", "--system", s(&sys), "--lambda", "5",
        "--scenario-count", "10", "--samples", "1000", "--dist", "uniform", "--seed", "3", "--out", s(&out),
    ]);
    let samples = csv_rows(&out.join("samples.csv"));
    assert_eq!(samples.len(), 1001);
    assert_eq!(samples[0], ["label", "sample", "b", "u", "run_id"]);
    for r in &samples[1..] {
        assert!(r[2].parse::<f64>().unwrap() >= -1e-6);
    }
    let report = csv_rows(&out.join("report.csv"));
    assert_eq!(report.len(), 2);
}

#[test]
fn sweep_has_eleven_rows() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "c2");
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep", "--betas", "0:1:0.1", "--system", s(&sys), "--lambda", "5", "--gamma", "1",
        "--scenario-count", "5", "--samples", "20", "--out", s(&out),
    ]);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[1][0], "beta=0");
    assert_eq!(rows[11][0], "beta=1");
    assert_eq!(manifest(&out)["results"]["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "c2");
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for (i, d) in dirs.iter().enumerate() {
        let mut args = vec![
            "simulate", "--model", "unified", "--beta", "0.5", "--system", s(&sys), "--lambda", "5",
            "--gamma", "2", "--scenario-count", "8", "--samples", "50", "--out", s(d),
        ];
        if i == 1 {
            args.push("--sequential");
        }
        ok(&args);
    }
    let (a, b) = (manifest(&dirs[0]), manifest(&dirs[1]));
    assert_eq!(a["run_id"], b["run_id"]);
    for name in a["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(
            fs::read(dirs[0].join(name)).unwrap(),
            fs::read(dirs[1].join(name)).unwrap(),
            "{name} differs"
        );
    }
    let strip = |mut m: Value| {
        m.as_object_mut().unwrap().remove("wall_times");
        m
    };
    assert_eq!(strip(a), strip(b));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let sys = export(tmp.path(), "c1");
    let cfg = tmp.path().join("run.json");
    let out = tmp.path().join("cfg");
    let body = serde_json::json!({
        "model": "det", "system": sys, "reserve-req": "10", "out": out,
    });
    fs::write(&cfg, body.to_string()).unwrap();
    ok(&["solve", "--config", s(&cfg)]);
    assert_eq!(manifest(&out)["settings"]["reserve"], serde_json::json!({ "uniform": 10.0 }));
    ok(&["solve", "--config", s(&cfg), "--reserve-req", "0"]);
    assert_eq!(manifest(&out)["settings"]["reserve"], "zero");

    fs::write(&cfg, r#"{"modle": "det"}"#).unwrap();
    let bad = run(&["solve", "--config", s(&cfg)]);
    assert_eq!(bad.status.code(), Some(2));
}
