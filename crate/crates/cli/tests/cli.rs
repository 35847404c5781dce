use std::path::Path;
use std::process::{Command, Output};

use cavity_array_cli::store::{read_csv, sha256_hex};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavity-array"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn identical_runs_write_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cli(&["ed-check", "--sizes", "2,3", "--g2", "1.35", "--fresh", "--out", arg(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert_eq!(fa.len(), 2);
    assert_eq!(fa, fb);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["task"], "ed-check");
    assert_eq!(manifest["jobs_failed"], 0);
    let (name, bytes) = &fa[0];
    assert_eq!(manifest["files"][name]["sha256"], sha256_hex(bytes));
}

#[test]
fn ed_check_agrees_with_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["ed-check", "--sizes", "2,3,4", "--g2", "0.5", "--out", arg(dir.path())]);
    assert!(o.status.success());
    let rows = read_csv(&dir.path().join("ed_check.csv")).unwrap();
    assert_eq!(rows.len(), 9);
    for r in rows {
        let d: f64 = r["abs_diff"].parse().unwrap();
        assert!(d <= 1e-8, "{r:?}");
    }
}

#[test]
fn cached_jobs_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["point", "--sizes", "6", "--m", "20", "--out", arg(dir.path())];
    assert!(cli(&args).status.success());
    let first = std::fs::read(dir.path().join("points.csv")).unwrap();
    let jobs: Vec<_> = std::fs::read_dir(dir.path().join("jobs")).unwrap().collect();
    assert_eq!(jobs.len(), 1);
    let again = cli(&args);
    assert!(again.status.success());
    assert_eq!(std::fs::read(dir.path().join("points.csv")).unwrap(), first);
}

#[test]
fn invalid_configuration_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cli(&["charge-gap-cut", "--sizes", "8,12", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("three sizes"));
    assert!(!out.exists());

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"dmrg": {"m": 40}, "sizez": [4]}"#).unwrap();
    let o = cli(&["point", "--config", arg(&cfg), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn config_file_is_merged_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"dmrg": {"m": 24}, "sizes": [5], "g2": [0.9]}"#).unwrap();
    let out = dir.path().join("out");
    let o = cli(&["point", "--config", arg(&cfg), "--sizes", "4", "--out", arg(&out)]);
    assert!(o.status.success());
    let rows = read_csv(&out.join("points.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["L"], "4");
    assert_eq!(rows[0]["m"], "24");
    assert_eq!(rows[0]["g2"], "0.9");
}

#[test]
fn failed_job_is_flagged_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    // 8 sites hold at most 32 polaritons with n_max 2
    std::fs::write(&cfg, r#"{"model": {"n_max": 2}, "n_pol": 40}"#).unwrap();
    let o = cli(&["point", "--config", arg(&cfg), "--sizes", "8", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let failures = read_csv(&dir.path().join("failures.csv")).unwrap();
    assert_eq!(failures.len(), 1);
    assert!(failures[0]["job"].contains("N=40"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["jobs_failed"], 1);
}

#[test]
fn plot_requires_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["plot", arg(dir.path()), "--figure", "gap-scaling"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("charge_gaps.csv") && err.contains("fit_report.json"), "{err}");
}

#[test]
fn charge_gap_cut_feeds_its_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "charge-gap-cut",
        "--sizes",
        "4,6,8",
        "--g2",
        "1.0,1.2",
        "--m",
        "24",
        "--workers",
        "2",
        "--out",
        arg(dir.path()),
    ]);
    assert!(o.status.success() || o.status.code() == Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let gaps = read_csv(&dir.path().join("charge_gaps.csv")).unwrap();
    assert_eq!(gaps.len(), 6);
    for r in &gaps {
        let per_site: f64 = r["value"].parse().unwrap();
        let total: f64 = r["total"].parse().unwrap();
        let l: f64 = r["L"].parse().unwrap();
        assert!((per_site * l - total).abs() <= 1e-12 * total.abs().max(1.0));
    }
    assert_eq!(read_csv(&dir.path().join("extrapolations.csv")).unwrap().len(), 2);
    let p = cli(&["plot", arg(dir.path()), "--figure", "gap-scaling"]);
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    let script = std::fs::read_to_string(dir.path().join("plots/gap-scaling.gp")).unwrap();
    assert!(script.contains("gap-scaling_fits.dat"));
    let data = std::fs::read_to_string(dir.path().join("plots/gap-scaling_data.dat")).unwrap();
    assert_eq!(data.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count(), 6);
}
