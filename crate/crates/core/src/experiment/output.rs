use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ResolvedConfig;
use super::run::{Experiment, Report, RunOutcome};
use super::svg::{render, Line, Panel, PALETTE};
use crate::adaptive::{ObserverConfig, StabilityConstants};
use crate::delay::PathResult;
use crate::error::{Error, Result};
use crate::gains::GainSchedule;
use crate::stability::MomentSeries;

#[derive(Serialize)]
struct ObserverManifest<'a> {
    #[serde(flatten)]
    config: &'a ObserverConfig,
    p: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'static str,
    version: &'static str,
    config: &'a ResolvedConfig,
    gains: Option<&'a GainSchedule>,
    observer: Option<ObserverManifest<'a>>,
    stability_constants: Option<&'a StabilityConstants>,
}

/// Files written by [`write_artifacts`].
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn manifest_json(exp: &Experiment) -> Result<String> {
    let observer = exp.observer().map(|o| ObserverManifest {
        config: o,
        p: (0..o.p.nrows())
            .map(|i| (0..o.p.ncols()).map(|j| o.p[(i, j)]).collect())
            .collect(),
    });
    let m = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &exp.config,
        gains: exp.gains(),
        observer,
        stability_constants: exp.stability_constants(),
    };
    serde_json::to_string_pretty(&m).map_err(|e| Error::Numerical(format!("manifest: {e}")))
}

pub fn report_json(report: &Report) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Numerical(format!("report: {e}")))
}

/// `t,ex_m,ex_m_se,ey_m,ey_m_se`.
pub fn moments_csv(state: &MomentSeries, output: &MomentSeries) -> String {
    let mut s = String::with_capacity(state.len() * 64);
    s.push_str("t,ex_m,ex_m_se,ey_m,ey_m_se\n");
    for k in 0..state.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            state.times[k], state.mean[k], state.std_err[k], output.mean[k], output.std_err[k]
        );
    }
    s
}

/// `t,x1..xn,u,xi1..xim` followed by any extra columns.
pub fn trajectory_csv(path: &PathResult, extra_names: &[String], extra: &[Vec<f64>]) -> String {
    let mut s = String::with_capacity(path.len() * 96);
    s.push('t');
    for i in 1..=path.dim {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",u");
    for i in 1..=path.noise_dim {
        let _ = write!(s, ",xi{i}");
    }
    for name in extra_names {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for k in 0..path.len() {
        let _ = write!(s, "{}", path.times[k]);
        for v in path.state(k) {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{}", path.inputs[k]);
        for v in path.noise_at(k) {
            let _ = write!(s, ",{v}");
        }
        if let Some(row) = extra.get(k) {
            for v in row {
                let _ = write!(s, ",{v}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn figure_svg(exp: &Experiment, out: &RunOutcome) -> String {
    let m = out.output_moments.order;
    let t = &out.output_moments.times;
    let mut first = vec![Line {
        label: format!("E|y|^{m}"),
        x: t,
        y: out.output_moments.mean.clone(),
        color: PALETTE[0],
        dashed: false,
    }];
    let tail = out.report.tail_bound;
    first.push(Line {
        label: "tail mean".into(),
        x: t,
        y: vec![tail; t.len()],
        color: PALETTE[2],
        dashed: true,
    });
    let mut panels = vec![Panel {
        title: format!("Monte Carlo E|y(t)|^{m} over {} paths", out.report.n),
        x_label: "t".into(),
        lines: first,
    }];
    let shown = exp.config.run.sample_paths.min(out.paths.len()).max(1);
    let sample = |f: &dyn Fn(&PathResult, usize) -> f64| -> Vec<Line<'_>> {
        out.paths
            .iter()
            .take(shown)
            .enumerate()
            .map(|(i, p)| Line {
                label: format!("path {i}"),
                x: &p.times,
                y: (0..p.len()).map(|k| f(p, k)).collect(),
                color: PALETTE[i % PALETTE.len()],
                dashed: false,
            })
            .collect()
    };
    panels.push(Panel {
        title: "sample outputs y(t)".into(),
        x_label: "t".into(),
        lines: sample(&|p, k| p.output(k)),
    });
    if let Some(first) = out.paths.first() {
        if first.internal_dim > 0 {
            let q = first.internal_dim;
            panels.push(Panel {
                title: "parameter estimate".into(),
                x_label: "t".into(),
                lines: sample(&|p, k| p.internal_at(k)[q - 1]),
            });
        }
    }
    render(&panels)
}

/// Writes `trajectory_<k>.csv`, `moments.csv`, `report.json`, `figure.svg`
/// and `manifest.json` into `dir`.
pub fn write_artifacts(exp: &Experiment, out: &RunOutcome, dir: &Path) -> Result<Artifacts> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: String, contents: String| -> Result<()> {
        let p = dir.join(name);
        write(&p, &contents)?;
        files.push(p);
        Ok(())
    };
    for (k, p) in out.paths.iter().take(exp.config.run.sample_paths).enumerate() {
        let (names, extra) = exp.extra_columns(p);
        put(format!("trajectory_{k}.csv"), trajectory_csv(p, &names, &extra))?;
    }
    put(
        "moments.csv".into(),
        moments_csv(&out.state_moments, &out.output_moments),
    )?;
    put("report.json".into(), report_json(&out.report)?)?;
    put("figure.svg".into(), figure_svg(exp, out))?;
    put("manifest.json".into(), manifest_json(exp)?)?;
    Ok(Artifacts {
        dir: dir.to_path_buf(),
        files,
    })
}
