use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chwave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chwave"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn transform_writes_manifest_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = chwave(dir.path(), &["transform", "--preset", "gaussian", "--set", "nx=513"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "transform");
    assert!(manifest["derived"]["C"].as_f64().unwrap() > 0.0);
    let rt = json(&dir.path().join("roundtrip.json"));
    assert!(rt["u_sup_error"].as_f64().unwrap() < 1e-5);
    assert!(dir.path().join("lagrangian.json").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "preset = \"gaussian\"\nnx = 129\ndt = 0.01\nt_end = 0.1\ndiag_every = 5\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = chwave(&out_dir, &["evolve", "--config", cfg.to_str().unwrap(), "--set", "t_end=0.05"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,energy,min_y_xi,constraint_residual,breaking_nodes");
    let last: f64 = lines.last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last - 0.05).abs() < 1e-12);
    assert_eq!(json(&out_dir.join("manifest.json"))["config"]["nx"], 129);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["evolve", "--set", "dtt=0.1"][..],
        &["evolve", "--set", "dt=-1"][..],
        &["predict", "--preset", "no_such_profile"][..],
    ] {
        let out = chwave(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn numerical_abort_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = chwave(dir.path(), &["evolve", "--preset", "steep_front", "--set", "nx=257", "--set", "dt=0.5", "--set", "t_end=5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("manifest.json").exists());
    assert!(json(&dir.path().join("abort.json"))["error"].is_string());
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["evolve", "--preset", "sech2", "--set", "nx=257", "--set", "t_end=0.2", "--set", "dt=0.01"];
    assert!(chwave(a.path(), &args).status.success());
    assert!(chwave(b.path(), &[&args[..], &["--set", "threads=1"]].concat()).status.success());
    for name in ["diagnostics.csv", "final.json", "breaking.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn predict_reports_future_breaking_for_steep_front() {
    let dir = tempfile::tempdir().unwrap();
    let out = chwave(dir.path(), &["predict", "--preset", "steep_front", "--set", "nx=1025", "--set", "slope_ratio=1.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdicts = json(&dir.path().join("verdicts.json"));
    let rows = verdicts.as_array().unwrap();
    assert_eq!(rows.len(), 1025);
    let future: Vec<_> = rows.iter().filter(|v| v["kind"] == "future_breaking").collect();
    assert!(!future.is_empty());
    for v in &future {
        let s = (2.0 * v["C"].as_f64().unwrap()).sqrt();
        assert!(v["u0x"].as_f64().unwrap() < -s);
        assert!(v["t_bound"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn vectorfield_has_the_lattice_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = chwave(dir.path(), &["vectorfield", "--set", "forcing=2", "--set", "lattice_n=5"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("vectorfield.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 25);
    assert!(csv.lines().any(|l| l == "0.0,0.0,2.0,0.0"), "{csv}");
}

#[test]
fn diagnose_reports_constant() {
    let dir = tempfile::tempdir().unwrap();
    assert!(chwave(dir.path(), &["diagnose", "--preset", "gaussian", "--set", "nx=257"]).status.success());
    let d = json(&dir.path().join("diagnose.json"));
    assert!(d.is_object());
}
