use std::path::Path;
use std::process::{Command, Output};

use gsvd_wiretap::linalg::{write_matrix, Complex64, ComplexMatrix};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsvd-wiretap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, m: &ComplexMatrix) -> String {
    let path = dir.join(name);
    write_matrix(&path, m).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn allocate_identical_identity_channels_has_zero_rate() {
    let dir = tempfile::tempdir().unwrap();
    let eye = ComplexMatrix::identity(3, 3);
    let hr = write(dir.path(), "hr.json", &eye);
    let he = write(dir.path(), "he.json", &eye);
    let out = bin(&["allocate", "--hr", &hr, "--he", &he, "--power", "10", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["rate_bits"].as_f64(), Some(0.0));
    assert!(report["mu"].is_null());
    assert!(report["p"].as_array().unwrap().iter().all(|p| p.as_f64() == Some(0.0)));
}

#[test]
fn allocate_json_reports_consistent_fields() {
    let dir = tempfile::tempdir().unwrap();
    let hr = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::new(2.0, 0.0),
        Complex64::new(1.0, 0.0),
    ]));
    let he = ComplexMatrix::from_row_slice(1, 2, &[Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.0)]);
    let hr = write(dir.path(), "hr.json", &hr);
    let he = write(dir.path(), "he.json", &he);
    let out = bin(&["allocate", "--hr", &hr, "--he", &he, "--power", "4", "--json"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let field = |k: &str| -> Vec<f64> {
        report[k].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
    };
    let (c, d, a, p) = (field("c"), field("d"), field("a"), field("p"));
    assert_eq!(c.len(), 2);
    let radiated: f64 = a.iter().zip(&p).map(|(a, p)| a * p).sum();
    assert!((radiated - 4.0).abs() < 1e-8);
    assert!((report["effective_power"].as_f64().unwrap() - radiated).abs() < 1e-12);
    let rate: f64 = (0..2).map(|i| ((1.0 + p[i] * c[i]) / (1.0 + p[i] * d[i])).log2()).sum();
    assert!((report["rate_bits"].as_f64().unwrap() - rate).abs() < 1e-12);
    assert!(rate > 0.0);
}

#[test]
fn allocate_text_output() {
    let dir = tempfile::tempdir().unwrap();
    let eye = ComplexMatrix::identity(2, 2);
    let hr = write(dir.path(), "hr.json", &(&eye * Complex64::new(2.0, 0.0)));
    let he = write(dir.path(), "he.json", &eye);
    let out = bin(&["allocate", "--hr", &hr, "--he", &he, "--power", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("secrecy_rate_bits"));
    assert!(text.contains("mu = "));
}

#[test]
fn allocate_missing_file_fails() {
    let out = bin(&["allocate", "--hr", "/nonexistent/hr.json", "--he", "/nonexistent/he.json", "--power", "1"]);
    assert!(!out.status.success());
}

#[test]
fn gsvd_check_passes() {
    let out = bin(&["gsvd-check", "--nt", "5", "--nr", "5", "--ne", "4", "--trials", "50", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("failures=0"));
}

#[test]
fn oracle_verify_passes() {
    let out = bin(&["oracle-verify", "--q", "3", "--trials", "20", "--budget", "10", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_verify_rejects_large_q() {
    let out = bin(&["oracle-verify", "--q", "9", "--trials", "1", "--budget", "1", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_fraction_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = bin(&[
        "sweep-fraction", "--nt", "3", "--nr", "3", "--ne", "2", "--power", "10", "--trials", "4",
        "--seed", "3", "--rho-grid", "0:0.25:1", "--out", &out_dir,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = std::fs::read_to_string(dir.path().join("fraction_trials.csv")).unwrap();
    let mut lines = trials.lines();
    assert_eq!(lines.next(), Some("trial,rho,uniform_rate_bits,optimal_rate_bits,q,dim_s1,dim_s2"));
    assert_eq!(lines.count(), 4 * 5);
    let agg = std::fs::read_to_string(dir.path().join("fraction_aggregate.csv")).unwrap();
    assert_eq!(agg.lines().next(), Some("param,mean_uniform,se_uniform,mean_optimal,se_optimal,trials"));
    assert_eq!(agg.lines().count(), 6);
}

#[test]
fn sweep_snr_thread_count_does_not_change_output() {
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().to_string_lossy().into_owned();
        let out = bin(&[
            "sweep-snr", "--threads", threads, "--nt", "3", "--nr", "3", "--ne", "3", "--trials", "8",
            "--seed", "5", "--snr-db", "0,10,20", "--out", &out_dir,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(std::fs::read(dir.path().join("snr_trials.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn sweep_fraction_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"n_t":4,"n_r":4,"n_e":3,"sigma_r2":1.0,"sigma_e2":0.5,"budget":100.0,"trials":3,"seed":9,"rho_grid":[0.0,0.5,1.0]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin(&[
        "sweep-fraction", "--config", &cfg.to_string_lossy(), "--out", &out_dir.to_string_lossy(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = std::fs::read_to_string(out_dir.join("fraction_trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3 * 3);
}

#[test]
fn bad_grid_is_a_usage_error() {
    let out = bin(&[
        "sweep-snr", "--nt", "2", "--nr", "2", "--ne", "2", "--trials", "1", "--seed", "1",
        "--snr-db", "10:5:0", "--out", "/tmp",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
