use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn repjsd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repjsd"))
        .args(args)
        .current_dir(cwd)
        .env_remove("REPJSD_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn selfcheck_passes_and_catches_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let ok = repjsd(&["selfcheck", "--seed", "7", "--out", "sc"], dir.path());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(!String::from_utf8_lossy(&ok.stdout).contains("FAIL"));
    assert_eq!(json(&dir.path().join("sc/manifest.json"))["command"], "selfcheck");
    for m in ["entropy-grad-sign", "no-trace-normalization", "wrong-pi-weighting"] {
        let out = repjsd(&["selfcheck", "--seed", "7", "--mutation", m, "--out", "m"], dir.path());
        assert_eq!(code(&out), 1, "mutation {m} went undetected");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["nonsense"][..],
        &["selfcheck", "--mutation", "bogus"],
        &["estimate", "--dataset", "cauchy:0.9"],
        &["estimate", "--dataset", "unknown"],
        &["estimate"],
        &["estimate", "--dataset", "blobs", "--ema", "1.5"],
        &["tst", "--method", "mmd", "--dataset", "blobs"],
        &["tst", "--dataset", "blobs", "--n", "ten"],
    ] {
        let out = repjsd(args, dir.path());
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn estimate_is_reproducible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = repjsd(
        &["estimate", "--dataset", "cauchy:0.3", "--n", "64", "--epochs", "5", "--seed", "3", "--out", "a"],
        dir.path(),
    );
    assert_eq!(code(&first), 0);
    let trace = std::fs::read_to_string(dir.path().join("a/trace.ndjson")).unwrap();
    assert_eq!(trace.lines().count(), 5);
    for line in trace.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert!(rec["estimate"].as_f64().unwrap().is_finite());
    }
    let again = repjsd(&["estimate", "--config", "a/manifest.json", "--out", "b"], dir.path());
    assert_eq!(code(&again), 0);
    assert_eq!(json(&dir.path().join("a/result.json")), json(&dir.path().join("b/result.json")));
    assert_eq!(json(&dir.path().join("b/manifest.json"))["seed"], 3);
}

#[test]
fn flags_override_config_file_and_env_seed_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"dataset": "blobs", "n": 40, "seed": 11}"#).unwrap();
    let out = repjsd(&["gen-data", "--config", "cfg.json", "--n", "30", "--out", "g"], dir.path());
    assert_eq!(code(&out), 0);
    let m = json(&dir.path().join("g/manifest.json"));
    assert_eq!(m["config"]["n"], 30);
    assert_eq!(m["seed"], 11);
    assert_eq!(std::fs::read_to_string(dir.path().join("g/x.csv")).unwrap().lines().count(), 30);

    let env = Command::new(env!("CARGO_BIN_EXE_repjsd"))
        .args(["gen-data", "--dataset", "blobs", "--n", "5", "--out", "e"])
        .current_dir(dir.path())
        .env("REPJSD_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(code(&env), 0);
    assert_eq!(json(&dir.path().join("e/manifest.json"))["seed"], 42);

    std::fs::write(dir.path().join("other.json"), r#"{"command": "tst", "config": {}}"#).unwrap();
    let wrong = repjsd(&["gen-data", "--config", "other.json"], dir.path());
    assert_eq!(code(&wrong), 2);
}

#[test]
fn file_inputs_drive_estimate_and_tst() {
    let dir = tempfile::tempdir().unwrap();
    let g = repjsd(&["gen-data", "--dataset", "gauss:2", "--n", "60", "--out", "d"], dir.path());
    assert_eq!(code(&g), 0);
    let fixed = repjsd(
        &["estimate", "--x", "d/x.csv", "--y", "d/y.csv", "--fixed", "--sigma", "1", "--out", "f"],
        dir.path(),
    );
    assert_eq!(code(&fixed), 0);
    let r = json(&dir.path().join("f/result.json"));
    assert_eq!(r["estimator"], "kernel");
    let v = r["estimate"].as_f64().unwrap();
    assert!(v > 0.0 && v < std::f64::consts::LN_2);

    let single = repjsd(
        &["tst", "--method", "jsd-k", "--x", "d/x.csv", "--y", "d/y.csv", "--single", "--out", "s"],
        dir.path(),
    );
    assert_eq!(code(&single), 0, "{}", String::from_utf8_lossy(&single.stderr));
    let report = json(&dir.path().join("s/report.json"));
    assert_eq!(report["null_samples"].as_array().unwrap().len(), 100);
}

#[test]
fn power_study_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = repjsd(
        &[
            "tst", "--method", "jsd-ff", "--dataset", "hdgm", "--d", "4", "--n", "20,40", "--trials", "2",
            "--test-sets", "3", "--permutations", "20", "--epochs", "5", "--threads", "1", "--out", "p",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(dir.path().join("p/power_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4);
    assert!(rows.lines().nth(1).unwrap().starts_with("hdgm:4,jsd-ff,20,4,0,"));
    let summary = std::fs::read_to_string(dir.path().join("p/power_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
    assert_eq!(json(&dir.path().join("p/manifest.json"))["config"]["d"], 4);
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "1,2\n3,x\n").unwrap();
    let out = repjsd(
        &["estimate", "--x", "bad.csv", "--y", "bad.csv", "--epochs", "2", "--out", "o"],
        dir.path(),
    );
    assert_ne!(code(&out), 0);
    assert!(!dir.path().join("o").exists());
}
