use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn antipgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antipgd"))
        .args(args)
        .env_remove("ANTIPGD_WORKERS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn manifest(dir: &Path, body: &str) -> String {
    let path = dir.join("m.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const BLOWUP: &str = r#"{
  "name": "blowup",
  "landscape": {"kind": "quadratic", "dim": 2, "curvature": 10.0},
  "runs": [{"name": "gd", "variant": "gd", "eta": 0.5, "steps": 200, "init": {"constant": {"value": 1.0}}}]
}"#;

#[test]
fn oracle_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = antipgd(&["oracle", "--out", out, "--horizon", "50", "--samples", "200", "--d", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("limit,")));
}

#[test]
fn invalid_manifest_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(
        dir.path(),
        r#"{"name": "bad", "landscape": {"kind": "widening_valley", "d": 3},
            "runs": [{"name": "a", "variant": "pgd", "eta": -1.0, "steps": 10, "sigma": 0.1}]}"#,
    );
    let o = antipgd(&["run", "--manifest", &m]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
    assert!(!dir.path().join("out").exists());

    let o = antipgd(&["run", "--manifest", &dir.path().join("missing.json").to_string_lossy()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn divergence_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), BLOWUP);
    assert_eq!(code(&antipgd(&["run", "--manifest", &m])), 3);
    assert_eq!(code(&antipgd(&["sweep", "--manifest", &m])), 0);
    assert!(dir.path().join("out/blowup/status.csv").exists());
}

#[test]
fn verify_selected_criteria() {
    let o = antipgd(&["verify", "--only", "3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(" 3 ")), "{text}");
    assert_eq!(code(&antipgd(&["verify", "--only", "99"])), 1);
}

#[test]
fn plot_reports_missing_metric() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(
        dir.path(),
        r#"{"name": "flat", "landscape": {"kind": "quadratic", "dim": 2, "curvature": 1.0},
            "runs": [{"name": "gd", "variant": "gd", "eta": 0.1, "steps": 20,
                      "init": {"constant": {"value": 1.0}}}]}"#,
    );
    assert_eq!(code(&antipgd(&["run", "--manifest", &m])), 0);
    let csv = dir.path().join("out/flat/aggregate.csv");
    let csv = csv.to_str().unwrap();
    let out = dir.path().join("plots");
    let out = out.to_str().unwrap();
    let ok = antipgd(&["plot", "--csv", csv, "--metrics", "train_loss", "--out", out]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("plots/plot_train_loss.svg").exists());
    let bad = antipgd(&["plot", "--csv", csv, "--metrics", "test_loss", "--out", out]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn worker_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), BLOWUP);
    let o = Command::new(env!("CARGO_BIN_EXE_antipgd"))
        .args(["sweep", "--manifest", &m])
        .env("ANTIPGD_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_antipgd"))
        .args(["sweep", "--manifest", &m])
        .env("ANTIPGD_WORKERS", "lots")
        .output()
        .unwrap();
    assert_ne!(code(&o), 0);
}
