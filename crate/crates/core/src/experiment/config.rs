use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::delay::DelaySpec;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;

/// Top-level experiment file. Sections left out are filled from the
/// built-in system's defaults by [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<NoiseSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Example1,
    Example2,
}

/// Either `builtin = "example1" | "example2"` or a custom strict-feedback
/// system given by expression strings in `t, x1..xn, xd1..xdn`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelaySpec>,
    /// True parameters of a custom adaptive plant (analysis only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelopes: Option<EnvelopeConfig>,
}

/// Bar-functions in the variable `y`, one per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub phi: Vec<String>,
    pub psi: Vec<String>,
    pub phi_tau: Vec<String>,
    pub psi_tau: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControllerConfig {
    StateFeedback {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pi: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pij: Option<Vec<Vec<f64>>>,
    },
    AdaptiveOutputFeedback(AdaptiveConfig),
    None,
}

/// Every key is optional for second-order plants, where the missing ones
/// take the built-in second benchmark values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d01: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d02: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dk1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dk2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dk3: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Plant state at `t0`, held constant on `[t0 - tau_max, t0]`.
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflation: Option<f64>,
    /// Multiplies every noise amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    /// Finite-difference tolerance of the dissipation check; defaults to
    /// `10 * step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Command-line overrides, applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub substeps: Option<usize>,
    pub noise_scale: Option<f64>,
    pub output: Option<PathBuf>,
}

/// Every run setting with a concrete value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub t0: f64,
    pub horizon: f64,
    pub step: f64,
    pub substeps: usize,
    pub paths: usize,
    pub seed: u64,
    pub k_max: f64,
    pub moment_order: f64,
    pub tail_fraction: f64,
    pub sample_paths: usize,
    pub epsilon: f64,
    pub inflation: f64,
    pub noise_scale: f64,
    pub dissipation_tol: f64,
    pub output: PathBuf,
}

/// An [`ExperimentConfig`] with every section present.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub system: SystemConfig,
    pub controller: ControllerConfig,
    pub noise: Vec<NoiseSpec>,
    pub initial: InitialConfig,
    pub run: ResolvedRun,
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&src).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn builtin(which: Builtin) -> Self {
        ExperimentConfig {
            system: SystemConfig {
                builtin: Some(which),
                ..SystemConfig::default()
            },
            controller: None,
            noise: None,
            initial: None,
            run: RunConfig::default(),
        }
    }

    /// Fills every missing section from the built-in defaults and applies the
    /// overrides.
    pub fn resolve(&self, ov: &Overrides) -> Result<ResolvedConfig> {
        let builtin = self.system.builtin;
        if builtin.is_some() && (self.system.f.is_some() || self.system.g.is_some()) {
            return Err(Error::Config(
                "system: give either `builtin` or custom `f`/`g`, not both".into(),
            ));
        }
        if builtin.is_none() && (self.system.f.is_none() || self.system.g.is_none()) {
            return Err(Error::Config("system: a custom system needs both `f` and `g`".into()));
        }
        let order = match builtin {
            Some(_) => 2,
            None => self.system.f.as_ref().map_or(0, Vec::len),
        };
        if order == 0 {
            return Err(Error::Config("system.f: at least one level is required".into()));
        }

        let controller = match (&self.controller, builtin) {
            (Some(c), _) => c.clone(),
            (None, Some(Builtin::Example1)) => ControllerConfig::StateFeedback { pi: None, pij: None },
            (None, Some(Builtin::Example2)) => ControllerConfig::AdaptiveOutputFeedback(AdaptiveConfig::default()),
            (None, None) => return Err(Error::Config("controller: required for a custom system".into())),
        };

        let noise = match (&self.noise, builtin) {
            (Some(n), _) => n.clone(),
            (None, Some(Builtin::Example1)) => vec![
                NoiseSpec::harmonic(1.0, 1.2, 1.5, 1),
                NoiseSpec::harmonic(1.0, 0.8, 1.0, 2),
            ],
            (None, Some(Builtin::Example2)) => vec![
                NoiseSpec::harmonic(0.8, 1.0, 0.5, 1),
                NoiseSpec::harmonic(1.2, 0.5, 1.0, 2),
            ],
            (None, None) => vec![NoiseSpec::Zero; order],
        };
        if noise.len() != order {
            return Err(Error::Config(format!(
                "noise: {} channel(s) given, the system has {order}",
                noise.len()
            )));
        }
        for (i, n) in noise.iter().enumerate() {
            n.validate().map_err(|e| Error::Config(format!("noise[{i}]: {e}")))?;
        }

        let mut initial = match (&self.initial, builtin) {
            (Some(i), _) => i.clone(),
            (None, Some(Builtin::Example1)) => InitialConfig {
                x: vec![0.5, -0.5],
                xhat0: None,
                theta_hat0: None,
            },
            (None, Some(Builtin::Example2)) => InitialConfig {
                x: vec![0.01, -0.3],
                xhat0: Some(vec![0.1]),
                theta_hat0: Some(-0.5),
            },
            (None, None) => return Err(Error::Config("initial: required for a custom system".into())),
        };
        if initial.x.len() != order {
            return Err(Error::Config(format!(
                "initial.x: expected {order} entries, got {}",
                initial.x.len()
            )));
        }
        if let ControllerConfig::AdaptiveOutputFeedback(_) = controller {
            let xhat = initial.xhat0.get_or_insert_with(|| vec![0.0; order.saturating_sub(1)]);
            if xhat.len() + 1 != order {
                return Err(Error::Config(format!(
                    "initial.xhat0: expected {} entries, got {}",
                    order - 1,
                    xhat.len()
                )));
            }
            initial.theta_hat0.get_or_insert(0.0);
        }

        let r = &self.run;
        let (horizon, substeps) = match builtin {
            Some(Builtin::Example1) => (20.0, 10),
            Some(Builtin::Example2) => (50.0, 1),
            None => (20.0, 1),
        };
        let step = ov.step.or(r.step).unwrap_or(1e-3);
        let run = ResolvedRun {
            t0: r.t0.unwrap_or(0.0),
            horizon: ov.horizon.or(r.horizon).unwrap_or(horizon),
            step,
            substeps: ov.substeps.or(r.substeps).unwrap_or(substeps),
            paths: ov.paths.or(r.paths).unwrap_or(200),
            seed: ov.seed.or(r.seed).unwrap_or(42),
            k_max: r.k_max.unwrap_or(1e6),
            moment_order: r.moment_order.unwrap_or(2.0),
            tail_fraction: r.tail_fraction.unwrap_or(0.25),
            sample_paths: r.sample_paths.unwrap_or(3),
            epsilon: r.epsilon.unwrap_or(0.05),
            inflation: r.inflation.unwrap_or(3.0),
            noise_scale: ov.noise_scale.or(r.noise_scale).unwrap_or(1.0),
            dissipation_tol: r.dissipation_tol.unwrap_or(10.0 * step),
            output: ov
                .output
                .clone()
                .or_else(|| r.output.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        run.validate()?;
        Ok(ResolvedConfig {
            system: self.system.clone(),
            controller,
            noise,
            initial,
            run,
        })
    }
}

impl ResolvedRun {
    fn validate(&self) -> Result<()> {
        let bad = |name: &str, why: String| Err(Error::Config(format!("run.{name}: {why}")));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step", format!("must be > 0, got {}", self.step));
        }
        if !(self.horizon > self.t0 && self.horizon.is_finite()) {
            return bad("horizon", format!("must exceed t0 = {}, got {}", self.t0, self.horizon));
        }
        if self.substeps == 0 {
            return bad("substeps", "must be >= 1".into());
        }
        if self.paths == 0 {
            return bad("paths", "must be >= 1".into());
        }
        if !(self.moment_order > 0.0) {
            return bad("moment_order", format!("must be > 0, got {}", self.moment_order));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return bad(
                "tail_fraction",
                format!("must lie in (0, 1], got {}", self.tail_fraction),
            );
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon", format!("must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.inflation >= 1.0) {
            return bad("inflation", format!("must be >= 1, got {}", self.inflation));
        }
        if !(self.noise_scale.is_finite()) {
            return bad("noise_scale", format!("must be finite, got {}", self.noise_scale));
        }
        if !(self.dissipation_tol > 0.0) {
            return bad("dissipation_tol", format!("must be > 0, got {}", self.dissipation_tol));
        }
        if !(self.k_max > 0.0) {
            return bad("k_max", format!("must be > 0, got {}", self.k_max));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_defaults() {
        let r = ExperimentConfig::builtin(Builtin::Example1)
            .resolve(&Overrides::default())
            .unwrap();
        assert_eq!(r.run.horizon, 20.0);
        assert_eq!(r.run.paths, 200);
        assert_eq!(r.run.seed, 42);
        assert_eq!(r.initial.x, vec![0.5, -0.5]);
        let r = ExperimentConfig::builtin(Builtin::Example2)
            .resolve(&Overrides {
                paths: Some(7),
                ..Overrides::default()
            })
            .unwrap();
        assert_eq!(r.run.horizon, 50.0);
        assert_eq!(r.run.paths, 7);
        assert_eq!(r.initial.theta_hat0, Some(-0.5));
    }

    #[test]
    fn parses_custom_system() {
        let src = r#"
            [system]
            f = ["-x1"]
            g = ["0"]
            theta_bar = 1.0
            delay = { kind = "constant", tau = 0.0 }

            [controller]
            kind = "none"

            [initial]
            x = [1.0]

            [run]
            horizon = 2.0
            paths = 1
        "#;
        let cfg = ExperimentConfig::from_toml_str(src).unwrap();
        let r = cfg.resolve(&Overrides::default()).unwrap();
        assert_eq!(r.noise, vec![NoiseSpec::Zero]);
        assert_eq!(r.run.horizon, 2.0);
    }

    #[test]
    fn unknown_field_is_named() {
        let src = "[system]\nbuiltin = \"example1\"\n[run]\nhorizn = 3.0\n";
        let e = ExperimentConfig::from_toml_str(src).unwrap_err().to_string();
        assert!(e.contains("horizn"), "{e}");
        let src = "[system]\nbuiltin = \"example3\"\n";
        assert!(ExperimentConfig::from_toml_str(src).is_err());
    }

    #[test]
    fn rejects_bad_run_values() {
        let mut cfg = ExperimentConfig::builtin(Builtin::Example1);
        cfg.run.step = Some(-1.0);
        let e = cfg.resolve(&Overrides::default()).unwrap_err().to_string();
        assert!(e.contains("run.step"), "{e}");
    }
}
