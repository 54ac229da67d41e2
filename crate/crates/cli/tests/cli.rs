use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lipobs"));
    c.env_remove("LIPOBS_OUT_DIR");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn design_example1_writes_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("example1.toml");
    let o = run(&[
        "design",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "theta1=0.1",
        "--set",
        "theta2=0.5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = tmp.path().join("example1");
    for f in ["synthesis.json", "problem.dat-s", "summary.txt", "scenario.toml"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(!dir.join("metrics.json").exists(), "design does not simulate");
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["design", "--config", "/definitely/not/here.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage: design"), "{}", stderr(&o));
}

#[test]
fn missing_required_flag_prints_subcommand_help() {
    let o = run(&["simulate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage: simulate"));
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["design", "--help"])), 0);
}

#[test]
fn bad_override_is_a_usage_error() {
    let cfg = config("example1.toml");
    let o = run(&["design", "--config", cfg.to_str().unwrap(), "--set", "no_such_key=1"]);
    assert_eq!(code(&o), 2);
}

fn linear(tmp: &Path, extra: &[&str], sub: &str) -> Output {
    let cfg = config("example1.toml");
    let mut args = vec![
        sub,
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "theta1=0",
        "--set",
        "theta2=0",
        "--set",
        "horizon=50",
        "--out",
        tmp.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = bin().args(&args).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    o
}

#[test]
fn collisions_create_suffixed_directories() {
    let tmp = tempfile::tempdir().unwrap();
    linear(tmp.path(), &[], "design");
    let first = std::fs::read(tmp.path().join("example1/synthesis.json")).unwrap();
    linear(tmp.path(), &[], "design");
    assert!(tmp.path().join("example1-1/synthesis.json").exists());
    assert_eq!(std::fs::read(tmp.path().join("example1/synthesis.json")).unwrap(), first);
}

#[test]
fn seed_changes_only_noise_dependent_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    linear(tmp.path(), &["--seed", "1"], "simulate");
    linear(tmp.path(), &["--seed", "2"], "simulate");
    linear(tmp.path(), &["--seed", "1"], "simulate");
    let read = |d: &str, f: &str| std::fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("example1", "synthesis.json"), read("example1-1", "synthesis.json"));
    assert_ne!(read("example1", "metrics.json"), read("example1-1", "metrics.json"));
    assert_eq!(read("example1", "metrics.json"), read("example1-2", "metrics.json"));
    assert_eq!(read("example1", "trajectories.csv"), read("example1-2", "trajectories.csv"));
}

#[test]
fn simulate_reuses_a_synthesis_record() {
    let tmp = tempfile::tempdir().unwrap();
    linear(tmp.path(), &[], "design");
    let rec = tmp.path().join("example1");
    let o = linear(tmp.path(), &["--synthesis", rec.to_str().unwrap()], "simulate");
    assert!(String::from_utf8_lossy(&o.stdout).contains("observer RMSE"));
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("synthesis.json")).unwrap();
    assert_eq!(read("example1"), read("example1-1"));
    assert!(tmp.path().join("example1-1/metrics.json").exists());
    assert!(!tmp.path().join("example1-1/problem.dat-s").exists());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("example1.toml");
    let o = bin()
        .env("LIPOBS_OUT_DIR", tmp.path())
        .args(["design", "--config", cfg.to_str().unwrap(), "--set", "theta1=0", "--set", "theta2=0"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp.path().join("example1/synthesis.json").exists());
}

#[test]
fn export_sdpa_without_solving() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("battery.dat-s");
    let cfg = config("battery.toml");
    for _ in 0..2 {
        let o = run(&["export-sdpa", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = lipobs::sdp::import_sdpa(&out).unwrap();
    let b = lipobs::sdp::import_sdpa(&tmp.path().join("battery-1.dat-s")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.num_vars, 11);
}

#[test]
fn compare_needs_two_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    linear(tmp.path(), &[], "design");
    let b = tmp.path().join("example1");
    assert_eq!(code(&run(&["compare", b.to_str().unwrap()])), 2);
    linear(tmp.path(), &[], "design");
    let csv = tmp.path().join("table.csv");
    let o = run(&["compare", b.to_str().unwrap(), tmp.path().join("example1-1").to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("source,label,system,theta1,theta2"));
    assert!(text.contains("cited,baseline LMI A"));
}

#[test]
fn infeasible_design_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("example1.toml");
    let o = run(&[
        "design",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "theta1=0.5",
        "--set",
        "theta2=0.5",
        "--set",
        "synthesis.theorem=\"T1\"",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let summary = std::fs::read_to_string(tmp.path().join("example1/summary.txt")).unwrap();
    assert!(summary.contains("[synthesis] FAILED"));
}

#[test]
fn bench_prints_five_column_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("example1.toml");
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "--workers", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    let header = out.lines().find(|l| l.starts_with("method")).expect("table header");
    assert_eq!(header.matches('(').count(), 5);
    assert!(out.lines().any(|l| l.starts_with("T1 ")) && out.lines().any(|l| l.starts_with("T2 ")));
    assert!(tmp.path().join("example1-bench/comparison.csv").exists());
}
