//! Experiment plumbing: TOML configuration, ensemble runs and artifacts.
//!
//! A configuration names a built-in benchmark or a custom system, a
//! controller, the noise channels, initial values and run settings. Running
//! it writes `trajectory_<k>.csv`, `moments.csv`, `report.json`,
//! `figure.svg` and `manifest.json`; the same configuration and seed give the
//! same bytes.

mod config;
mod output;
mod run;
mod svg;

use std::path::Path;

pub use config::{
    AdaptiveConfig, Builtin, ControllerConfig, EnvelopeConfig, ExperimentConfig, InitialConfig, Overrides,
    ResolvedConfig, ResolvedRun, RunConfig, SystemConfig,
};
pub use output::{figure_svg, manifest_json, moments_csv, report_json, trajectory_csv, write_artifacts, Artifacts};
pub use run::{noise_moment, Design, Experiment, Report, RunOutcome, SandwichReport, ThetaHatReport, SANDWICH_TOL};

use crate::error::Result;

/// Builds, runs and writes one experiment into its configured output
/// directory.
pub fn run_and_write(cfg: &ExperimentConfig, ov: &Overrides) -> Result<(Experiment, RunOutcome, Artifacts)> {
    let exp = Experiment::from_config(cfg, ov)?;
    let out = exp.run()?;
    let dir = exp.config.run.output.clone();
    let art = write_artifacts(&exp, &out, &dir)?;
    Ok((exp, out, art))
}

pub fn run_example1(ov: &Overrides) -> Result<(Experiment, RunOutcome, Artifacts)> {
    run_and_write(&ExperimentConfig::builtin(Builtin::Example1), ov)
}

pub fn run_example2(ov: &Overrides) -> Result<(Experiment, RunOutcome, Artifacts)> {
    run_and_write(&ExperimentConfig::builtin(Builtin::Example2), ov)
}

pub fn run_config(path: &Path, ov: &Overrides) -> Result<(Experiment, RunOutcome, Artifacts)> {
    run_and_write(&ExperimentConfig::from_file(path)?, ov)
}
