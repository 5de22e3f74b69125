use std::path::Path;
use std::process::{Command, Output};

fn mcwm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcwm")).args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn two_state_passes_and_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcwm(&["two-state", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("two_state.csv"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "n,exact_tv,simple_bound,general_bound_v63,general_bound_limit");
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 21);
}

#[test]
fn lognormal_runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = mcwm(&["lognormal", "--seed", "9", "--steps", "2000", "--particles", "10", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trace_seed9.csv", "kde_seed9.csv", "summary.csv"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name} differs");
    }
    assert!(read(&a.path().join("trace_seed9.csv")).contains("# seed = 9"));
}

#[test]
fn stochastic_command_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcwm(&["lognormal", "--steps", "2000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn asymmetric_lognormal_interval_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcwm(&[
        "lognormal",
        "--seed",
        "1",
        "--steps",
        "2000",
        "--restricted",
        "--radius-interval=-5,10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\nsteps = 50000\nparticles = 10\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = mcwm(&[
        "lognormal",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "1500",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read(&out_dir.join("trace_seed3.csv"));
    let rows = trace.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 1501);
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sead = 3\n").unwrap();
    let out = mcwm(&["two-state", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcwm(&[
        "lognormal",
        "--seed",
        "1",
        "--steps",
        "2000",
        "--particles",
        "10",
        "--expect-tv-below",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
