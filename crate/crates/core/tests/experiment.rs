use rdde::experiment::{moments_csv, Builtin, Experiment, ExperimentConfig, Overrides};
use rdde::Error;

const DECAY: &str = r#"
    [system]
    name = "decay"
    f = ["-x1"]
    g = ["1"]
    theta_bar = 1.0
    delay = { kind = "constant", tau = 0.0 }

    [[noise]]
    kind = "harmonic-product"
    a = 0.1
    ell = 1.0
    ellbar = 1.0

    [controller]
    kind = "none"

    [initial]
    x = [1.0]

    [run]
    horizon = 4.0
    step = 0.01
    paths = 16
    seed = 9
"#;

fn run_csv(cfg: &ExperimentConfig, ov: &Overrides) -> String {
    let exp = Experiment::from_config(cfg, ov).unwrap();
    let out = exp.run().unwrap();
    moments_csv(&out.state_moments, &out.output_moments)
}

#[test]
fn custom_system_runs_and_repeats_bytewise() {
    let cfg = ExperimentConfig::from_toml_str(DECAY).unwrap();
    let a = run_csv(&cfg, &Overrides::default());
    let b = run_csv(&cfg, &Overrides::default());
    assert_eq!(a, b);
    assert!(a.starts_with("t,ex_m,ex_m_se,ey_m,ey_m_se\n"));
    assert_eq!(a.lines().count(), 402);
    let c = run_csv(
        &cfg,
        &Overrides {
            seed: Some(10),
            ..Default::default()
        },
    );
    assert_ne!(a, c);
}

#[test]
fn silent_noise_gives_pure_decay() {
    let cfg = ExperimentConfig::from_toml_str(DECAY).unwrap();
    let exp = Experiment::from_config(
        &cfg,
        &Overrides {
            noise_scale: Some(0.0),
            ..Default::default()
        },
    )
    .unwrap();
    let out = exp.run().unwrap();
    let last = *out.state_moments.mean.last().unwrap();
    assert!((last - (-8.0f64).exp()).abs() < 1e-8, "{last}");
    assert!(out.report.noise_moment_k == 0.0);
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(DECAY).unwrap();
    let ov = Overrides {
        output: Some(dir.path().to_path_buf()),
        paths: Some(4),
        ..Default::default()
    };
    let (_, _, art) = rdde::experiment::run_and_write(&cfg, &ov).unwrap();
    for name in [
        "moments.csv",
        "report.json",
        "figure.svg",
        "manifest.json",
        "trajectory_0.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert_eq!(art.dir, dir.path());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report.get("tail_bound").is_some());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 9"));
}

#[test]
fn short_builtin_runs() {
    let ov = Overrides {
        paths: Some(2),
        horizon: Some(0.5),
        ..Default::default()
    };
    let e1 = Experiment::from_config(&ExperimentConfig::builtin(Builtin::Example1), &ov).unwrap();
    assert!(e1.gains().is_some());
    let o1 = e1.run().unwrap();
    assert!(o1.report.sandwich.as_ref().unwrap().holds());
    let e2 = Experiment::from_config(&ExperimentConfig::builtin(Builtin::Example2), &ov).unwrap();
    assert_eq!(e2.observer().unwrap().p[(0, 0)], 1.0);
    let o2 = e2.run().unwrap();
    assert!(o2.report.theta_hat.as_ref().unwrap().finite);
    assert!(o2.report.theoretical_bound.is_none());
}

#[test]
fn malformed_configs_are_config_errors() {
    for src in [
        "[system]\nbuiltin = \"example1\"\n[run]\npaths = \"many\"\n",
        "[system]\nf = [\"-x1 +\"]\ng = [\"0\"]\ntheta_bar = 1.0\ndelay = { kind = \"constant\", tau = 0.0 }\n[initial]\nx = [1.0]\n",
        "[system]\nf = [\"-x2\"]\ng = [\"0\"]\ntheta_bar = 1.0\ndelay = { kind = \"constant\", tau = 0.0 }\n[initial]\nx = [1.0]\n",
    ] {
        let r = ExperimentConfig::from_toml_str(src)
            .and_then(|c| Experiment::from_config(&c, &Overrides::default()).map(|_| ()));
        assert!(
            matches!(r, Err(Error::Config(_) | Error::Expr(_) | Error::Parameter { .. })),
            "{src}: {r:?}"
        );
    }
}
