//! End-to-end runs of the `delobs` binary.

use std::path::Path;
use std::process::{Command, Output};

fn delobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delobs")).args(args).output().expect("run delobs")
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn presets_are_listed() {
    let out = delobs(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["example1-q1-gated", "example1-switch", "synthetic3", "contractive"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = delobs(&["simulate", "--preset", "example1-q1-gated", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let pa = std::fs::read(a.path().join("plant.csv")).unwrap();
    let pb = std::fs::read(b.path().join("plant.csv")).unwrap();
    assert!(!pa.is_empty());
    assert_eq!(pa, pb);
    assert_eq!(header(&a.path().join("plant.csv")), "t,x1,x2,y,u");
}

#[test]
fn observe_writes_schedule_and_observer_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = delobs(&["observe", "--preset", "example1-q1-gated", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("observer.csv")), "t,z1,z2,e_norm,envelope,xi,in_tube");
    let synth = delobs(&["synthesize", "--preset", "example1-q1-gated", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(synth.status.code(), Some(0));
    assert_eq!(header(&dir.path().join("schedule.csv")), "t,P11,P12,P21,P22,d,d_bar,phi,kappa,window_id");
}

#[test]
fn switch_writes_the_composite_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = delobs(&["switch", "--preset", "example1-switch", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("switching.csv")), "t,Z1,Z2,active_m,e_norm,stage_bound");
}

#[test]
fn verify_passes_on_example1() {
    let dir = tempfile::tempdir().unwrap();
    let out = delobs(&["verify", "--preset", "example1-q1-gated", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn exit_codes_for_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // Cubic damping: no admissible tube constant exists.
    let out = delobs(&["synthesize", "--preset", "example1-q1-gated", "--set", "system.q=3", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no admissible xi"));
    // Invalid parameter.
    let out = delobs(&["simulate", "--preset", "contractive", "--set", "params.tau=0", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    // Missing configuration file.
    let out = delobs(&["simulate", "--config", "/nonexistent/delobs.conf"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_set_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, format!("system.preset = contractive\nparams.horizon = 4\noutput.dir = {}\n", dir.path().display()))
        .unwrap();
    let out = delobs(&["simulate", "--config", conf.to_str().unwrap(), "--set", "params.horizon=2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("plant.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(last <= 2.0 + 1e-9 && last > 1.0, "last sample at {last}");
}
