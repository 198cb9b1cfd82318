use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{AdaptiveConfig, Builtin, ControllerConfig, ExperimentConfig, Overrides, ResolvedConfig};
use crate::adaptive::{
    design_observer, observer_error, stability_constants, AdaptiveController, AdaptiveDesignParams, ObserverConfig,
    StabilityConstants,
};
use crate::delay::{Controller, DelaySpec, InitialFunction, IntegratorConfig, NoController, PathResult};
use crate::error::{Error, Result};
use crate::gains::{synthesize_gains, GainParams, GainSchedule, StateFeedbackController};
use crate::stability::{
    adaptive_lk_series, empirical_nss_p, fit_nss_envelope, lyapunov_dissipation_check, noise_norms,
    state_feedback_lk_series, ultimate_bound, DissipationReport, Ensemble, EnvelopeFit, MomentSeries, NssPVerdict,
};
use crate::systems::{example1_reactor, example2_system, Envelopes, StrictFeedbackSystem};

/// The synthesized controller and what the analysis needs from it.
#[derive(Debug, Clone)]
pub enum Design {
    StateFeedback(Box<GainSchedule>),
    Adaptive {
        controller: Arc<AdaptiveController>,
        /// Present when the true parameters are known.
        constants: Option<StabilityConstants>,
    },
    Open,
}

/// A resolved configuration turned into a runnable ensemble.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ResolvedConfig,
    pub plant: StrictFeedbackSystem,
    pub design: Design,
    pub ensemble: Ensemble,
}

impl Experiment {
    pub fn from_config(cfg: &ExperimentConfig, ov: &Overrides) -> Result<Self> {
        Self::build(cfg.resolve(ov)?)
    }

    pub fn build(config: ResolvedConfig) -> Result<Self> {
        let sys = &config.system;
        let (plant, theta, envelopes) = match sys.builtin {
            Some(Builtin::Example1) => (example1_reactor(), None, None),
            Some(Builtin::Example2) => {
                let s = example2_system();
                (s.plant, Some(s.theta), Some(s.envelopes))
            }
            None => {
                let f = sys.f.clone().unwrap_or_default();
                let g = sys.g.clone().unwrap_or_default();
                let delay = sys.delay.clone().unwrap_or(DelaySpec::constant(0.0));
                let plant = StrictFeedbackSystem::from_expressions(
                    sys.name.clone().unwrap_or_else(|| "custom".into()),
                    &f,
                    &g,
                    sys.theta_bar.unwrap_or(1.0),
                    delay,
                )?;
                let envelopes = match &sys.envelopes {
                    Some(e) => Some(Envelopes::parse(&e.phi, &e.psi, &e.phi_tau, &e.psi_tau)?),
                    None => None,
                };
                (plant, sys.theta.clone(), envelopes)
            }
        };
        let n = plant.order();
        if let Some(th) = &theta {
            if th.len() != n {
                return Err(Error::Config(format!(
                    "system.theta: expected {n} entries, got {}",
                    th.len()
                )));
            }
        }
        let delay = plant.delay_spec().clone();

        let (design, controller): (Design, Arc<dyn Controller>) = match &config.controller {
            ControllerConfig::StateFeedback { pi, pij } => {
                let mut params = GainParams::ones(n);
                if let Some(pi) = pi {
                    params.pi = pi.clone();
                }
                if let Some(pij) = pij {
                    params.pij = pij.clone();
                }
                let gains = synthesize_gains(plant.theta_bar(), n, &delay, &params)?;
                let ctrl = Arc::new(StateFeedbackController::new(&gains));
                (Design::StateFeedback(Box::new(gains)), ctrl)
            }
            ControllerConfig::AdaptiveOutputFeedback(ac) => {
                let envelopes = envelopes
                    .ok_or_else(|| Error::Config("system.envelopes: required by the adaptive controller".into()))?;
                let (params, kappa, b) = adaptive_params(ac, n)?;
                let observer = design_observer(n, &kappa, b)?;
                let init = &config.initial;
                let ctrl = AdaptiveController::new(
                    envelopes,
                    &delay,
                    params.clone(),
                    observer.clone(),
                    init.xhat0.as_deref().unwrap_or(&[]),
                    init.theta_hat0.unwrap_or(0.0),
                )?;
                let constants = theta.as_ref().map(|th| stability_constants(&params, &observer, th));
                let ctrl = Arc::new(ctrl);
                (
                    Design::Adaptive {
                        controller: ctrl.clone(),
                        constants,
                    },
                    ctrl,
                )
            }
            ControllerConfig::None => (Design::Open, Arc::new(NoController)),
        };

        let r = &config.run;
        let integrator = IntegratorConfig {
            t0: r.t0,
            horizon: r.horizon,
            step: r.step,
            substeps: r.substeps,
            k_max: r.k_max,
        };
        integrator.validate().map_err(|e| Error::Config(format!("run: {e}")))?;
        let ensemble = Ensemble {
            system: Arc::new(plant.clone()),
            controller,
            noise: config.noise.iter().map(|s| s.scaled(r.noise_scale)).collect(),
            init: InitialFunction::constant(config.initial.x.clone()),
            integrator,
            seed: r.seed,
        };
        Ok(Experiment {
            config,
            plant,
            design,
            ensemble,
        })
    }

    /// Runs the ensemble and every check that applies to the design.
    pub fn run(&self) -> Result<RunOutcome> {
        let r = &self.config.run;
        let paths = self.ensemble.run(r.paths)?;
        let m = r.moment_order;
        let state_moments = MomentSeries::from_paths(&paths, m, |p, k| p.state_norm(k))?;
        let output_moments = MomentSeries::from_paths(&paths, m, |p, k| p.output(k))?;
        let noise_k = noise_moment(&paths, 4.0);

        let tail_bound = ultimate_bound(&output_moments, r.tail_fraction)?;
        let tail_bound_state = ultimate_bound(&state_moments, r.tail_fraction)?;
        let phi_norm = self.config.initial.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let envelope = fit_nss_envelope(&state_moments, phi_norm)?;
        let inflated = envelope.inflated(r.inflation);
        let nss_p = empirical_nss_p(&paths, &inflated, m, r.epsilon)?;
        let delay = self.plant.delay_spec();
        let init = &self.ensemble.init;
        let tol = r.dissipation_tol;

        let mut report = Report {
            m,
            n: paths.len(),
            horizon: r.horizon,
            step: r.step,
            tail_fraction: r.tail_fraction,
            tail_bound,
            tail_bound_state,
            noise_moment_k: noise_k,
            theoretical_bound: None,
            theoretical_bound_note: None,
            envelope,
            envelope_inflation: r.inflation,
            envelope_dominates: inflated.dominates(&state_moments),
            nss_p,
            dissipation: None,
            sandwich: None,
            theta_hat: None,
        };

        match &self.design {
            Design::StateFeedback(gains) => {
                let pi_tilde = gains.pi_tilde;
                report.theoretical_bound = Some(2.0 * pi_tilde * noise_k);
                report.theoretical_bound_note = Some(format!(
                    "lim E|y|^2 <= 2 pi_tilde K with pi_tilde = {pi_tilde}, K = sup E|xi|^4"
                ));
                let per_path: Vec<(DissipationReport, SandwichReport)> = paths
                    .par_iter()
                    .map(|p| {
                        let s = state_feedback_lk_series(p, &gains.beta, delay, init)?;
                        let xi = noise_norms(p);
                        let d = lyapunov_dissipation_check(&p.times, &s.v, &xi, 1.0, pi_tilde, 4.0, 0.0, tol)?;
                        Ok((d, SandwichReport::check(&s.v, &s.lower, &s.upper)))
                    })
                    .collect::<Result<_>>()?;
                let (d, s): (Vec<_>, Vec<_>) = per_path.into_iter().unzip();
                report.dissipation = DissipationReport::merge(&d);
                report.sandwich = SandwichReport::merge(&s);
            }
            Design::Adaptive { controller, constants } => {
                report.theta_hat = Some(ThetaHatReport::from_paths(&paths));
                if let Some(c) = constants {
                    match c.regulation_bound(noise_k) {
                        Ok(b) => {
                            report.theoretical_bound = Some(b);
                            report.theoretical_bound_note = Some(format!(
                                "lim E|y|^2 <= (2 d_bar1 K + 2 d_bar2) / c_bar with c_bar = {}, d_bar1 = {}, d_bar2 = {}",
                                c.c_bar, c.d_bar1, c.d_bar2
                            ));
                        }
                        Err(e) => {
                            report.theoretical_bound_note = Some(format!(
                                "{e}; unchecked value (2 d_bar1 K + 2 d_bar2) / c_bar = {}",
                                c.regulation_bound_unchecked(noise_k)
                            ));
                        }
                    }
                    let d: Vec<DissipationReport> = paths
                        .par_iter()
                        .map(|p| {
                            let v = adaptive_lk_series(p, controller, c, delay, init)?;
                            let xi = noise_norms(p);
                            lyapunov_dissipation_check(&p.times, &v, &xi, c.c_bar, c.d_bar1, 4.0, c.d_bar2, tol)
                        })
                        .collect::<Result<_>>()?;
                    report.dissipation = DissipationReport::merge(&d);
                }
            }
            Design::Open => {}
        }

        Ok(RunOutcome {
            paths,
            state_moments,
            output_moments,
            report,
        })
    }

    /// Extra trajectory columns: `xhat`, `thetahat` and the observer error for
    /// adaptive designs.
    pub(crate) fn extra_columns(&self, path: &PathResult) -> (Vec<String>, Vec<Vec<f64>>) {
        let Design::Adaptive { controller, constants } = &self.design else {
            return (Vec::new(), Vec::new());
        };
        let n = controller.order();
        let mut names: Vec<String> = (1..n).map(|j| format!("xhat{j}")).collect();
        names.push("thetahat".into());
        if constants.is_some() {
            names.extend((2..=n).map(|j| format!("e{j}")));
        }
        let rows = (0..path.len())
            .map(|k| {
                let w = path.internal_at(k);
                let mut row = w.to_vec();
                if let Some(c) = constants {
                    row.extend(observer_error(
                        path.state(k),
                        &w[..n - 1],
                        &controller.observer().kappa,
                        c.theta_star,
                    ));
                }
                row
            })
            .collect();
        (names, rows)
    }

    pub fn gains(&self) -> Option<&GainSchedule> {
        match &self.design {
            Design::StateFeedback(g) => Some(g.as_ref()),
            _ => None,
        }
    }

    pub fn observer(&self) -> Option<&ObserverConfig> {
        match &self.design {
            Design::Adaptive { controller, .. } => Some(controller.observer()),
            _ => None,
        }
    }

    pub fn stability_constants(&self) -> Option<&StabilityConstants> {
        match &self.design {
            Design::Adaptive { constants, .. } => constants.as_ref(),
            _ => None,
        }
    }
}

fn adaptive_params(ac: &AdaptiveConfig, n: usize) -> Result<(AdaptiveDesignParams, Vec<f64>, f64)> {
    let base = (n == 2).then(AdaptiveDesignParams::example2);
    macro_rules! pick {
        ($field:ident) => {
            match (&ac.$field, &base) {
                (Some(v), _) => v.clone(),
                (None, Some(b)) => b.$field.clone(),
                (None, None) => {
                    return Err(Error::Config(format!(
                        "controller.{}: required for order {n}",
                        stringify!($field)
                    )))
                }
            }
        };
    }
    let params = AdaptiveDesignParams {
        mu: pick!(mu),
        c: pick!(c),
        d01: pick!(d01),
        d02: pick!(d02),
        dk1: pick!(dk1),
        dk2: pick!(dk2),
        dk3: pick!(dk3),
    };
    let kappa = match (&ac.kappa, n) {
        (Some(k), _) => k.clone(),
        (None, 2) => vec![1.0],
        (None, _) => return Err(Error::Config(format!("controller.kappa: required for order {n}"))),
    };
    let b = ac.b.unwrap_or(2.0);
    params
        .validate(n)
        .map_err(|e| Error::Config(format!("controller: {e}")))?;
    Ok((params, kappa, b))
}

/// `sup_k mean_paths |xi(t_k)|^r` over the ensemble's own noise samples.
pub fn noise_moment(paths: &[PathResult], r: f64) -> f64 {
    let Some(first) = paths.first() else { return 0.0 };
    let n = paths.len() as f64;
    (0..first.len())
        .map(|k| {
            paths
                .iter()
                .map(|p| p.noise_at(k).iter().map(|v| v * v).sum::<f64>().sqrt().powf(r))
                .sum::<f64>()
                / n
        })
        .fold(0.0, f64::max)
}

/// Sandwich `|z|^2 / 2 <= V <= factor * sup_window |z|^2` at every sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub points: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Largest `|z|^2 / 2 - V`.
    pub worst_lower: f64,
    /// Largest `V - factor * sup |z|^2`.
    pub worst_upper: f64,
}

pub const SANDWICH_TOL: f64 = 1e-6;

impl SandwichReport {
    pub fn check(v: &[f64], lower: &[f64], upper: &[f64]) -> Self {
        let mut r = SandwichReport {
            points: v.len(),
            lower_violations: 0,
            upper_violations: 0,
            worst_lower: f64::NEG_INFINITY,
            worst_upper: f64::NEG_INFINITY,
        };
        for ((&v, &lo), &hi) in v.iter().zip(lower).zip(upper) {
            if lo - v > SANDWICH_TOL {
                r.lower_violations += 1;
            }
            if v - hi > SANDWICH_TOL {
                r.upper_violations += 1;
            }
            r.worst_lower = r.worst_lower.max(lo - v);
            r.worst_upper = r.worst_upper.max(v - hi);
        }
        r
    }

    pub fn merge(reports: &[SandwichReport]) -> Option<Self> {
        reports.iter().cloned().reduce(|a, b| SandwichReport {
            points: a.points + b.points,
            lower_violations: a.lower_violations + b.lower_violations,
            upper_violations: a.upper_violations + b.upper_violations,
            worst_lower: a.worst_lower.max(b.worst_lower),
            worst_upper: a.worst_upper.max(b.worst_upper),
        })
    }

    pub fn holds(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaHatReport {
    pub finite: bool,
    pub min: f64,
    pub max: f64,
    /// Ensemble mean of the final estimate.
    pub final_mean: f64,
}

impl ThetaHatReport {
    fn from_paths(paths: &[PathResult]) -> Self {
        let mut r = ThetaHatReport {
            finite: true,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            final_mean: 0.0,
        };
        for p in paths {
            let q = p.internal_dim;
            for k in 0..p.len() {
                let th = p.internal_at(k)[q - 1];
                r.finite &= th.is_finite();
                r.min = r.min.min(th);
                r.max = r.max.max(th);
            }
            r.final_mean += p.internal_at(p.len() - 1)[q - 1];
        }
        r.final_mean /= paths.len() as f64;
        r
    }
}

/// The stability report written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub m: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub horizon: f64,
    pub step: f64,
    pub tail_fraction: f64,
    /// Tail mean of `E|y|^m`.
    pub tail_bound: f64,
    /// Tail mean of `E|x|^m`.
    pub tail_bound_state: f64,
    /// `K = sup_t E|xi(t)|^4`, estimated from the ensemble's own noise.
    #[serde(rename = "K")]
    pub noise_moment_k: f64,
    pub theoretical_bound: Option<f64>,
    pub theoretical_bound_note: Option<String>,
    /// Fitted to `E|x|^m`.
    pub envelope: EnvelopeFit,
    pub envelope_inflation: f64,
    /// Whether the inflated envelope dominates `E|x|^m` everywhere.
    pub envelope_dominates: bool,
    pub nss_p: NssPVerdict,
    pub dissipation: Option<DissipationReport>,
    pub sandwich: Option<SandwichReport>,
    pub theta_hat: Option<ThetaHatReport>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub paths: Vec<PathResult>,
    pub state_moments: MomentSeries,
    pub output_moments: MomentSeries,
    pub report: Report,
}
