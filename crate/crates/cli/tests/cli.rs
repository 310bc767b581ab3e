use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn lz2mode(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lz2mode"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn summary(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn exact_sweep_linear_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = lz2mode(&["sweep", "--set", "N=50", "--set", "g=0", "--set", "alpha=10"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path(), "summary.json");
    let p = s["p_lz"]["p"].as_f64().unwrap();
    assert!((p - 0.7304).abs() < 0.01 * 0.7304, "p = {p}");
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["config"]["N"], 50);
    assert!(s["residuals"]["norm_drift_per_time"].as_f64().unwrap() < 1e-8);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("# schema_version: 1\n# config: {"));
}

#[test]
fn csv_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = lz2mode(&["sweep", "--set", "N=6", "--set", "g=2", "--set", "alpha=2"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    for row in data_rows(&csv) {
        for cell in row {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), cell);
        }
    }
}

#[test]
fn master_without_noise_matches_exact() {
    let base = ["--set", "N=10", "--set", "g=1", "--set", "alpha=1"];
    let exact_dir = tempfile::tempdir().unwrap();
    let master_dir = tempfile::tempdir().unwrap();
    let e = lz2mode(&[&["sweep"][..], &base].concat(), exact_dir.path());
    let m = lz2mode(&[&["sweep", "--method", "master", "--set", "gamma=0"][..], &base].concat(), master_dir.path());
    assert_eq!(code(&e), 0);
    assert_eq!(code(&m), 0, "{}", String::from_utf8_lossy(&m.stderr));
    let pe = summary(exact_dir.path(), "summary.json")["p_lz"]["p"].as_f64().unwrap();
    let pm = summary(master_dir.path(), "summary.json")["p_lz"]["p"].as_f64().unwrap();
    assert!((pe - pm).abs() < 1e-6, "exact {pe} vs master {pm}");
}

#[test]
fn ensemble_is_reproducible() {
    let args = [
        "sweep", "--method", "ensemble", "--seed", "11", "--set", "members=120", "--set", "N=10", "--set", "g=-5",
        "--set", "alpha=1", "--set", "initial_mode=2",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&lz2mode(&args, a.path())), 0);
    assert_eq!(code(&lz2mode(&[&args[..], &["--workers", "2"]].concat(), b.path())), 0);
    let ca = fs::read(a.path().join("trajectory.csv")).unwrap();
    let cb = fs::read(b.path().join("trajectory.csv")).unwrap();
    assert_eq!(ca, cb);
    let s = summary(a.path(), "summary.json");
    assert_eq!(s["seed"], 11);
    assert!(s["p_lz"]["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn embedded_config_reproduces_output() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = lz2mode(&["sweep", "--set", "N=8", "--set", "g=3", "--set", "alpha=0.5", "--set", "sample_dt=0.5"], first.path());
    assert_eq!(code(&o), 0);
    let cfg = first.path().join("summary.json");
    let o = lz2mode(&["sweep", "--config", cfg.to_str().unwrap()], second.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(first.path().join("trajectory.csv")).unwrap(),
        fs::read(second.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn config_from_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_lz2mode"))
        .args(["sweep", "--config", "-", "--out"])
        .arg(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(br#"{"method": "meanfield", "N": 30, "g": 1, "alpha": 10}"#)
        .unwrap();
    assert!(child.wait().unwrap().success());
    let s = summary(dir.path(), "summary.json");
    assert_eq!(s["config"]["method"], "meanfield");
    let p = s["p_lz"]["p"].as_f64().unwrap();
    assert!(p > 0.6 && p < 0.9, "p = {p}");
}

#[test]
fn invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["sweep", "--method", "ensemble"][..],
        &["sweep", "--method", "master"],
        &["sweep", "--set", "gamma=0.1"],
        &["sweep", "--set", "N=0"],
        &["sweep", "--set", "members=5"],
        &["sweep", "--set", "unknown_key=1"],
        &["scan"],
        &["sweep", "--set", "t_start=0", "--set", "t_end=4"],
        &["squeezing", "--method", "meanfield"],
    ] {
        let o = lz2mode(args, dir.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn numerical_failure_exits_3_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = lz2mode(&["sweep", "--set", "N=2", "--set", "tol=1e-300"], dir.path());
    assert_eq!(code(&o), 3);
    let diag = summary(dir.path(), "error.json");
    assert_eq!(diag["status"], "numerical_failure");
    assert!(diag["error"].as_str().unwrap().contains("step size"));
}

#[test]
fn scan_rows_and_partial_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = lz2mode(&["scan", "--set", "N=8", "--set", "scan.alpha=[0,1,10]", "--set", "scan.g=[0,2]"], dir.path());
    assert_eq!(code(&o), 0);
    let rows = data_rows(&fs::read_to_string(dir.path().join("scan.csv")).unwrap());
    assert_eq!(rows.len(), 6);
    let status: Vec<&str> = rows.iter().map(|r| r[5].as_str()).collect();
    assert!(status[..2].iter().all(|s| s.contains("alpha = 0")));
    assert!(status[2..].iter().all(|&s| s == "ok"));
    // Row order follows the axes: alpha outer, g inner.
    assert_eq!(rows[3][0].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[3][1].parse::<f64>().unwrap(), 2.0);

    let all_bad = tempfile::tempdir().unwrap();
    let o = lz2mode(&["scan", "--set", "N=8", "--set", "scan.alpha=[0]"], all_bad.path());
    assert_eq!(code(&o), 4);
}

#[test]
fn scan_independent_of_workers() {
    let args = ["scan", "--set", "N=12", "--set", "scan.alpha=[0.5,2]", "--set", "scan.initial_mode=[1,2]", "--set", "g=3"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&lz2mode(&[&args[..], &["--workers", "1"]].concat(), a.path())), 0);
    assert_eq!(code(&lz2mode(&[&args[..], &["--workers", "3"]].concat(), b.path())), 0);
    assert_eq!(fs::read(a.path().join("scan.csv")).unwrap(), fs::read(b.path().join("scan.csv")).unwrap());
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lz2mode"))
        .args(["sweep", "--set", "N=4", "--out"])
        .arg(dir.path())
        .env("LZ_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn husimi_frames_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let o = lz2mode(
        &["husimi", "--set", "N=10", "--set", "g=5", "--set", "alpha=0.1", "--set", "husimi_times=[-10,0.5]"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    for k in 0..2 {
        let side = summary(dir.path(), &format!("husimi_{k:03}.json"));
        assert_eq!(side["N"], 10);
        assert!(side["normalization_residual"].as_f64().unwrap() < 1e-6);
        let rows = data_rows(&fs::read_to_string(dir.path().join(format!("husimi_{k:03}.csv"))).unwrap());
        let n_theta = side["grid"]["n_theta"].as_u64().unwrap() as usize;
        let n_phi = side["grid"]["n_phi"].as_u64().unwrap() as usize;
        assert_eq!(rows.len(), n_theta);
        assert!(rows.iter().all(|r| r.len() == n_phi + 1));
    }
    assert_eq!(summary(dir.path(), "husimi_001.json")["t"].as_f64(), Some(0.5));

    let empty = tempfile::tempdir().unwrap();
    let target = empty.path().join("frames");
    let o = lz2mode(&["husimi", "--set", "N=10"], &target);
    assert_eq!(code(&o), 0);
    assert!(!target.exists());
}

#[test]
fn spectrum_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = lz2mode(
        &["spectrum", "--set", "N=6", "--set", "g=5", "--set", r#"eps_grid={"min":-1,"max":1,"points":5}"#],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let rows = data_rows(&fs::read_to_string(dir.path().join("spectrum.csv")).unwrap());
    assert_eq!(rows.len(), 5);
    // eps, 7 levels, the stationary count and 4 energy slots.
    assert!(rows.iter().all(|r| r.len() == 1 + 7 + 1 + 4));
    assert_eq!(rows[2][8], "4");
    let s = summary(dir.path(), "spectrum.json");
    assert!(s["swallow_tail_eps"].as_f64().unwrap() > 0.0);
}

#[test]
fn squeezing_series_and_revival() {
    let dir = tempfile::tempdir().unwrap();
    let o = lz2mode(
        &[
            "squeezing", "--set", "N=20", "--set", "g=-5", "--set", "alpha=0.1", "--set", "initial_mode=2", "--set",
            "revival_horizon=40", "--set", "sample_dt=0.05",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path(), "squeezing.json");
    assert!(s["final_xi_n2"].as_f64().unwrap() < 1.0);
    let t_rev = s["revival"]["revival_time"].as_f64().unwrap();
    assert!(t_rev > 0.0 && t_rev.is_finite());
}
