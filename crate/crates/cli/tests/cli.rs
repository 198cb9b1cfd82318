use std::path::Path;
use std::process::{Command, Output};

fn rdde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdde")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const DECAY: &str = r#"
[system]
f = ["-x1"]
g = ["1"]
theta_bar = 1.0
delay = { kind = "constant", tau = 0.0 }

[[noise]]
kind = "harmonic-product"
a = 0.5
ell = 1.0
ellbar = 1.0

[controller]
kind = "none"

[initial]
x = [1.0]

[run]
horizon = 6.0
step = 0.01
paths = 8
"#;

fn write_config(dir: &Path, src: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, src).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn example1_smoke_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex1");
    let o = rdde(&[
        "run",
        "example1",
        "--paths",
        "2",
        "--horizon",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("beta") && s.contains("pi_tilde = 2"), "{s}");
    assert!(s.contains("paths = 2"), "{s}");
    for name in [
        "moments.csv",
        "report.json",
        "figure.svg",
        "manifest.json",
        "trajectory_0.csv",
        "trajectory_1.csv",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn example2_smoke_run_prints_observer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex2");
    let o = rdde(&[
        "run",
        "example2",
        "--paths",
        "1",
        "--horizon",
        "0.2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("observer: kappa = [1.0]"), "{s}");
    assert!(s.contains("not positive"), "{s}");
    let traj = std::fs::read_to_string(out.join("trajectory_0.csv")).unwrap();
    assert!(traj.lines().next().unwrap().contains("thetahat"));
}

#[test]
fn malformed_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[system]\nbuiltin = \"example1\"\n[run]\nhorizn = 2.0\n");
    let o = rdde(&["run", "config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));
}

#[test]
fn missing_config_exits_with_code_4() {
    let o = rdde(&["run", "config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unstable_ensemble_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let src = DECAY
        .replace("\"-x1\"", "\"2 * x1\"")
        .replace("horizon = 6.0", "horizon = 20.0");
    let cfg = write_config(dir.path(), &src);
    let out = dir.path().join("out");
    let o = rdde(&["run", "config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_noise_scale_gives_pure_decay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DECAY);
    let out = dir.path().join("out");
    let o = rdde(&[
        "run",
        "config",
        &cfg,
        "--noise-scale",
        "0",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let ex: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((ex - (-12.0f64).exp()).abs() < 1e-9, "{last}");
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DECAY);
    let read = |name: &str| {
        let out = dir.path().join(name);
        let o = rdde(&["run", "config", &cfg, "--seed", "11", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read(out.join("moments.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}
