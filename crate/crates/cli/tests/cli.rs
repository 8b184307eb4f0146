use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ferrosim::diagnostics::{read_timeseries, LEDGER_COLUMNS};

fn ferrosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferrosim")).args(args).output().expect("spawn ferrosim")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "\
grid.nx = 12
grid.ny = 12
stepping.h = 0.005
stepping.n_steps = 4
initial.scenario = magnetic_stripes
initial.width = 0.08
output.dump_every = 3
";

#[test]
fn check_only_prints_normalized_config_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", SMALL);
    let out_dir = dir.path().join("out");
    let o = ferrosim(&["--config", &cfg, "--check-only", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = String::from_utf8(o.stdout).unwrap();
    assert!(echo.contains("grid.nx = 12\n") && echo.contains("params.alpha = 0.1\n"));
    assert!(!out_dir.exists());
}

#[test]
fn bad_inputs_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ferrosim(&["--check-only"]).status.code(), Some(1));
    let missing = dir.path().join("nope.cfg");
    let o = ferrosim(&["--config", missing.to_str().unwrap(), "--check-only"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.cfg"));
    let cfg = write(dir.path(), "bad.cfg", "params.alpha = -1\n");
    let o = ferrosim(&["--config", &cfg, "--check-only"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("params.alpha"));
    let cfg = write(dir.path(), "ok.cfg", SMALL);
    assert_eq!(ferrosim(&["--config", &cfg, "--steps", "0", "--check-only"]).status.code(), Some(1));
    assert_eq!(ferrosim(&["--config", &cfg, "--splitting", "bogus", "--check-only"]).status.code(), Some(1));
    assert_eq!(ferrosim(&["--help"]).status.code(), Some(0));
}

#[test]
fn standard_run_writes_both_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", SMALL);
    let out = dir.path().join("out");
    let o = ferrosim(&["--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_timeseries(&out.join("timeseries.csv")).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().enumerate().all(|(k, r)| r.step == k));
    let text = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert!(text.starts_with(&LEDGER_COLUMNS.join(",")));
    for step in [0, 3, 4] {
        let dump = fs::read_to_string(out.join(format!("fields/step_{step:06}.txt"))).unwrap();
        assert!(dump.contains(&format!("step = {step}\n")) && dump.contains("[phi]\n") && dump.contains("[v]\n"));
    }
    assert!(!out.join("fields/step_000001.txt").exists());
    assert!(out.join("config.txt").exists());

    // an existing directory is kept unless forced
    let again = ferrosim(&["--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(1));
    let forced = ferrosim(&["--config", &cfg, "--out-dir", out.to_str().unwrap(), "--force", "--steps", "2"]);
    assert_eq!(forced.status.code(), Some(0));
    assert_eq!(read_timeseries(&out.join("timeseries.csv")).unwrap().len(), 3);
}

#[test]
fn strict_naive_run_fails_a_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "naive.cfg",
        "grid.nx = 16\ngrid.ny = 16\nstepping.h = 0.1\nstepping.n_steps = 3\ninitial.width = 0.05\noutput.dump_every = 0\n",
    );
    let out = dir.path().join("out");
    let o = ferrosim(&["--config", &cfg, "--out-dir", out.to_str().unwrap(), "--splitting", "naive", "--strict-energy"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    // the initial row was flushed before the failure
    assert!(!read_timeseries(&out.join("timeseries.csv")).unwrap().is_empty());
}

#[test]
fn naive_run_fails_the_ledger_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "naive.cfg",
        "grid.nx = 16\ngrid.ny = 16\nstepping.h = 0.1\nstepping.n_steps = 2\ninitial.width = 0.05\noutput.dump_every = 0\n",
    );
    let naive = ferrosim(&["--config", &cfg, "--out-dir", dir.path().join("a").to_str().unwrap(), "--splitting", "naive"]);
    assert_eq!(naive.status.code(), Some(3), "{}", String::from_utf8_lossy(&naive.stderr));
    let convex = ferrosim(&["--config", &cfg, "--out-dir", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(convex.status.code(), Some(0), "{}", String::from_utf8_lossy(&convex.stderr));
}
