use std::path::Path;
use std::process::Command;

use rdcontract_cli::{run, EXIT_ERROR, EXIT_NOT_CERTIFIED, EXIT_OK};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rdcontract"))
}

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let mut full = vec!["rdcontract", "--out", dir.to_str().unwrap()];
    full.extend_from_slice(args);
    run(full)
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    lines.next().unwrap();
    lines.map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn bcf_of_flat_profiles_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--out", dir.path().to_str().unwrap(), "bcf", "--r-m", "0", "--r-r", "0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().next(), Some("1.0"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bcf.json")).unwrap()).unwrap();
    assert_eq!(json["bcf"], 1.0);
    assert_eq!(json["seed"], 0);
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn sweep_is_byte_identical_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--n",
        "120",
        "--seed",
        "5",
        "sweep-omega",
        "--epsilon",
        "1e-2",
        "--steps",
        "5",
        "--t-end",
        "40",
        "--window",
        "30",
        "40",
    ];
    assert_eq!(run_in(a.path(), &args), EXIT_OK);
    assert_eq!(run_in(b.path(), &args), EXIT_OK);
    for f in ["sweep_omega.csv", "sweep_omega.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let text = std::fs::read_to_string(a.path().join("sweep_omega.csv")).unwrap();
    assert!(text.contains("seed=5") && !text.contains('\r'));
}

#[test]
fn sweep_zeta_stays_below_bound() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--n",
        "150",
        "sweep-zeta",
        "--r-min",
        "0",
        "--r-max",
        "1",
        "--steps",
        "3",
    ];
    assert_eq!(run_in(dir.path(), &args), EXIT_OK);
    let rows = data_rows(&dir.path().join("sweep_zeta.csv"));
    assert_eq!(rows.len(), 3);
    for row in rows {
        let zeta: f64 = row[1].parse().unwrap();
        let bound: f64 = row[2].parse().unwrap();
        assert!(zeta <= bound, "{row:?}");
    }
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "--n",
        "200",
        "certify",
        "--model",
        "example31",
        "--epsilon",
        "0.01",
        "--omega",
    ];
    let mut ok = base.to_vec();
    ok.push("0.01");
    assert_eq!(run_in(dir.path(), &ok), EXIT_OK);
    let mut bad = base.to_vec();
    bad.push("0.5");
    assert_eq!(run_in(dir.path(), &bad), EXIT_NOT_CERTIFIED);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["pass"], false);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"command": "certify", "model": "example31", "epsilon": 0.01, "omega": 0.5, "n": 100}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(run_in(dir.path(), &["--config", cfg, "certify"]), EXIT_NOT_CERTIFIED);
    assert_eq!(
        run_in(dir.path(), &["--config", cfg, "certify", "--omega", "0.01"]),
        EXIT_OK
    );
    assert_eq!(run_in(dir.path(), &["--config", cfg, "eig"]), EXIT_ERROR);
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["simulate", "--model", "example31"]), EXIT_ERROR);
    assert_eq!(run_in(dir.path(), &["certify", "--model", "nope"]), EXIT_ERROR);
    assert_eq!(run(["rdcontract", "--bogus"]), EXIT_ERROR);
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let blocked = file.join("sub");
    assert_eq!(run_in(&blocked, &["bcf"]), EXIT_ERROR);
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .env("RD_CONTRACT_THREADS", "0")
        .args(["--out", dir.path().to_str().unwrap(), "bcf"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_ERROR));
    let status = bin()
        .env("RD_CONTRACT_THREADS", "2")
        .args(["--out", dir.path().to_str().unwrap(), "bcf"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
}

#[test]
fn simulate_writes_trajectory_and_norms() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--n",
        "50",
        "simulate",
        "--model",
        "translation",
        "--t-end",
        "2",
        "--sample-every",
        "5",
    ];
    assert_eq!(run_in(dir.path(), &args), EXIT_OK);
    let rows = data_rows(&dir.path().join("trajectory.csv"));
    assert_eq!(rows[0].len(), 4);
    assert_eq!(rows.len() % (3 * 50), 0);
    let norms = data_rows(&dir.path().join("norms.csv"));
    assert_eq!(norms.len() * 150, rows.len());
    let t_last: f64 = norms.last().unwrap()[0].parse().unwrap();
    assert!((t_last - 2.0).abs() < 1e-12);
}
