use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn phasegate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasegate")).args(args).output().unwrap()
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().to_str().unwrap().to_string()
}

/// Header JSON and numeric rows of a CSV written by the tool.
fn read_csv(path: &Path) -> (Value, Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    let columns = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, columns, rows)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_version() {
    assert!(phasegate(&["--help"]).status.success());
    let v = phasegate(&["--version"]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    assert_eq!(phasegate(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(phasegate(&["gate", "u3"]).status.code(), Some(2));
    let empty = phasegate(&["spectrum", "--eps-start", "0.1", "--eps-stop", "0", "--out", &out]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("empty"));
    assert_eq!(phasegate(&["design", "u1", "--zeta", "1.5", "--out", &out]).status.code(), Some(2));
    assert_eq!(phasegate(&["gate", "u1", "--dt", "0", "--out", &out]).status.code(), Some(2));

    let cfg = dir.path().join("phys.json");
    fs::write(&cfg, r#"{"c_j_farads": 6e-12, "c_c_farads": 60.6e-15, "i_c_amperes": 21e-6}"#).unwrap();
    let mixed = phasegate(&["design", "u1", "--config", cfg.to_str().unwrap(), "--zeta", "0.02", "--out", &out]);
    assert_eq!(mixed.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"ns": 4}"#).unwrap();
    assert_eq!(phasegate(&["design", "u1", "--config", bad.to_str().unwrap(), "--out", &out]).status.code(), Some(2));
}

#[test]
fn spectrum_gap_minimum_at_symmetric_point() {
    let dir = TempDir::new().unwrap();
    let r = phasegate(&["spectrum", "--eps-start", "-0.01", "--eps-stop", "0.01", "--eps-step", "0.002", "--out", &out_arg(&dir)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let (header, columns, rows) = read_csv(&dir.path().join("spectrum.csv"));
    assert_eq!(header["tool"], "phasegate");
    assert_eq!(header["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(header["params"]["scales"]["ns"], 4.0);
    assert_eq!(columns, ["eps", "E0", "E1", "E2", "E3", "E4", "E5"]);
    assert_eq!(rows.len(), 11);
    let mid = rows.iter().position(|r| r[0] == 0.0).unwrap();
    let gap = |r: &Vec<f64>| r[3] - r[2];
    assert!(gap(&rows[mid]) < gap(&rows[mid - 1]) && gap(&rows[mid]) < gap(&rows[mid + 1]));
    let crossings = read_json(&dir.path().join("crossings.json"));
    let found = crossings["result"]["crossings"].as_array().unwrap();
    let c12 = found.iter().find(|c| c["levels"] == serde_json::json!([1, 2])).unwrap();
    assert!(c12["eps_star"].as_f64().unwrap().abs() < 1e-3);
}

#[test]
fn entangle_rows() {
    let dir = TempDir::new().unwrap();
    let r = phasegate(&["entangle", "--eps=-0.1,0", "--out", &out_arg(&dir)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let (_, columns, rows) = read_csv(&dir.path().join("entanglement.csv"));
    assert_eq!(columns, ["eps", "S1", "S3", "S4", "S5"]);
    // The sweep inserts points where level continuity needs them.
    assert!(rows.len() >= 2);
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
    let at = |e: f64| rows.iter().find(|r| r[0] == e).unwrap();
    assert!(at(-0.1)[1] < 0.05);
    assert!((at(0.0)[1] - 1.0).abs() < 0.02);
}

#[test]
fn design_physical_units_and_k_scaling() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("phys.json");
    fs::write(&cfg, r#"{"c_j_farads": 6e-12, "c_c_farads": 60.6e-15, "i_c_amperes": 21e-6}"#).unwrap();
    let out1 = dir.path().join("u1");
    let r = phasegate(&["design", "u1", "--config", cfg.to_str().unwrap(), "--j0", "0.988", "--out", out1.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let doc = read_json(&out1.join("schedule.json"));
    let ghz = doc["header"]["params"]["plasma_frequency_ghz"].as_f64().unwrap();
    assert!((ghz / 6.45 - 1.0).abs() < 5e-3, "{ghz}");
    let s = &doc["result"]["schedule"];
    assert!((s["eps_b"].as_f64().unwrap() + 0.036).abs() < 0.004);
    let tau_r_ns = doc["result"]["durations"]["tau_r_ns"].as_f64().unwrap();
    let expected = 20.0 * std::f64::consts::PI / (2.0 * std::f64::consts::PI * ghz);
    assert!((tau_r_ns / expected - 1.0).abs() < 1e-9);

    let tau = |k: &str| {
        let out = dir.path().join(format!("u2k{k}"));
        let r = phasegate(&["design", "u2", "--k", k, "--out", out.to_str().unwrap()]);
        assert!(r.status.success());
        read_json(&out.join("schedule.json"))["result"]["schedule"]["interaction_time"].as_f64().unwrap()
    };
    let (t1, t2) = (tau("1"), tau("2"));
    assert!((t2 / t1 - 2.0).abs() < 1e-12);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = phasegate(&["spectrum", "--eps=-0.1,-0.05", "--out", out.to_str().unwrap()]);
        assert!(r.status.success());
        (fs::read(out.join("spectrum.csv")).unwrap(), fs::read(out.join("crossings.json")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn null_pulse_is_identity_like() {
    let dir = TempDir::new().unwrap();
    let r = phasegate(&[
        "gate", "u1", "--eps-b", "-0.1", "--tau-i", "0", "--tau-r", "2", "--out", &out_arg(&dir),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let doc = read_json(&dir.path().join("report.json"));
    let rep = &doc["result"]["report"];
    assert!(rep["fidelity"].as_f64().unwrap() > 0.99);
    assert!(rep["leakage"].as_f64().unwrap() < 1e-3);
    let (_, _, m) = read_csv(&dir.path().join("matrix.csv"));
    for (r, row) in m.iter().enumerate() {
        let diag = row[1 + 2 * r].hypot(row[2 + 2 * r]);
        assert!(diag > 0.999, "row {r}: {diag}");
    }
    let (_, cols, trace) = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(cols.len(), 18);
    assert!(trace.len() > 10);
}

#[test]
fn swap_scored_as_phase_gate_exits_4() {
    let dir = TempDir::new().unwrap();
    // A full |01>-|10> exchange at the symmetric point is far from any controlled phase.
    let r = phasegate(&[
        "gate", "u1", "--eps-b", "0", "--tau-i", "330", "--tau-r", "5", "--dt", "0.02", "--out", &out_arg(&dir),
    ]);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
    let diag = read_json(&dir.path().join("diagnostic.json"));
    assert!(diag["result"]["rms_residual"].as_f64().unwrap() > 0.1);
    assert!(!dir.path().join("report.json").exists());
}
