use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rydcav::PhysicalParams;
use serde_json::Value;

fn rydcav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydcav"))
        .args(args)
        .env_remove("RYDCAV_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// CSV rows after the `#` metadata and the column header.
fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/eit_synthetic.csv")
}

#[test]
fn c6_prints_anchor_value() {
    let out = rydcav(&["c6", "--series", "S", "--n", "60"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "-140 GHz.um6\n");
    let out = rydcav(&["c6", "--series", "D", "--n", "56"]);
    assert_eq!(stdout(&out), "45 GHz.um6\n");
}

#[test]
fn empty_cavity_scan_peaks_at_unity() {
    let out = rydcav(&[
        "linear-scan",
        "--override",
        "ensemble.cooperativity=0",
        "--override",
        "drive.omega_cf=0",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("# rydcav "));
    let data = rows(&text);
    assert_eq!(data.len(), 201);
    let best = data.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert_eq!(best[0], 0.0);
    assert_eq!(format!("{:.3}", best[1]), "1.000");
}

#[test]
fn fit_eit_reproduces_fixture_parameters() {
    let fixture = fixture();
    let out = rydcav(&[
        "fit-eit",
        "--data",
        fixture.to_str().unwrap(),
        "--override",
        "cavity.gamma_c=12",
        "--override",
        "ensemble.cooperativity=4",
        "--override",
        "drive.omega_cf=4.5",
        "--override",
        "rydberg.gamma_r=0.3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["result"]["converged"], Value::Bool(true));
    let truth = [
        ("gamma_c", 10.0),
        ("cooperativity", 5.0),
        ("omega_cf", 4.0),
        ("gamma_r", 0.2),
    ];
    let params = report["result"]["parameters"].as_array().unwrap();
    for (name, value) in truth {
        let p = params.iter().find(|p| p["name"] == name).unwrap();
        let fitted = p["value"].as_f64().unwrap();
        assert!((fitted - value).abs() < 0.05 * value, "{name}: {fitted}");
        assert!(p["ci95"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn override_equals_editing_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut edited = PhysicalParams::default();
    edited.drive.omega_cf = 6.5;
    edited.rydberg.n = 79;
    let edited_path = dir.path().join("edited.json");
    std::fs::write(&edited_path, edited.to_json_pretty()).unwrap();
    let base_path = dir.path().join("base.json");
    std::fs::write(&base_path, PhysicalParams::default().to_json_pretty()).unwrap();

    for cmd in ["linear-scan", "meanfield-scan", "validate"] {
        let a = rydcav(&[cmd, "--config", edited_path.to_str().unwrap()]);
        let b = rydcav(&[
            cmd,
            "--config",
            base_path.to_str().unwrap(),
            "--override",
            "drive.omega_cf=6.5",
            "--override",
            "rydberg.n=79",
        ]);
        assert!(a.status.success() && b.status.success(), "{cmd}");
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
}

#[test]
fn out_flag_writes_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let to_file = rydcav(&["linear-scan", "--out", path.to_str().unwrap()]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    assert_eq!(
        std::fs::read(&path).unwrap(),
        rydcav(&["linear-scan"]).stdout
    );
}

#[test]
fn exit_codes() {
    let invalid = rydcav(&["validate", "--override", "cavity.gamma_c=-1"]);
    assert_eq!(invalid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("cavity.gamma_c"));

    assert_eq!(
        rydcav(&["validate", "--override", "cavity.bogus=1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        rydcav(&["validate", "--override", "no-equals-sign"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        rydcav(&["validate", "--config", "/nonexistent/config.json"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(rydcav(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(rydcav(&["--help"]).status.code(), Some(0));

    // undamped Rydberg coherence on two-photon resonance
    let singular = rydcav(&["linear-scan", "--override", "rydberg.gamma_r=0"]);
    assert_eq!(singular.status.code(), Some(2));

    let threads = Command::new(env!("CARGO_BIN_EXE_rydcav"))
        .args(["c6", "--series", "S", "--n", "60"])
        .env("RYDCAV_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
    let capped = Command::new(env!("CARGO_BIN_EXE_rydcav"))
        .args(["linear-scan"])
        .env("RYDCAV_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(capped.stdout, rydcav(&["linear-scan"]).stdout);
}

#[test]
fn noise_is_seeded_and_recorded() {
    let a = rydcav(&["linear-scan", "--noise", "0.01", "--seed", "3"]);
    let b = rydcav(&["linear-scan", "--noise", "0.01", "--seed", "4"]);
    let text = stdout(&a);
    assert!(text.contains("# seed=3\n"));
    assert!(text.contains("delta_p_mhz,transmission,weight\n"));
    assert_ne!(rows(&text), rows(&stdout(&b)));
    assert_eq!(
        a.stdout,
        rydcav(&["linear-scan", "--noise", "0.01", "--seed", "3"]).stdout
    );
}

#[test]
fn transient_fit_from_generated_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transient.csv");
    let gen = rydcav(&[
        "bubble-evolve",
        "--override",
        "rydberg.series=\"D\"",
        "--override",
        "rydberg.n=85",
        "--override",
        "rydberg.gamma_s=0.01",
        "--override",
        "rydberg.xi=2",
        "--override",
        "drive.alpha=7.0710678118654755",
        "--t-end",
        "30",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(
        gen.status.success(),
        "{}",
        String::from_utf8_lossy(&gen.stderr)
    );
    let fit = rydcav(&[
        "fit-transient",
        "--data",
        path.to_str().unwrap(),
        "--override",
        "rydberg.series=\"D\"",
        "--override",
        "rydberg.n=85",
        "--override",
        "rydberg.gamma_s=0.01",
        "--override",
        "rydberg.xi=1",
        "--override",
        "drive.alpha=7.0710678118654755",
    ]);
    assert!(
        fit.status.success(),
        "{}",
        String::from_utf8_lossy(&fit.stderr)
    );
    let report: Value = serde_json::from_str(&stdout(&fit)).unwrap();
    let xi = report["result"]["parameters"][0]["value"].as_f64().unwrap();
    assert!((xi - 2.0).abs() < 0.2, "{xi}");
}

#[test]
fn json_format_wraps_metadata() {
    let out = rydcav(&["bubble-steady", "--format", "json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["meta"]["command"], "bubble-steady");
    assert_eq!(v["meta"]["params_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["result"]["converged"], Value::Bool(true));
}
