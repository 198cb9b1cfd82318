//! Monte Carlo moment estimation and empirical stability checks.
//!
//! The decaying part of a moment bound is instantiated as an exponential
//! envelope `A e^{-c (t - t0)} + B`; `lim sup` statements are proxied by tail
//! means over a finite horizon.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::adaptive::{observer_error, AdaptiveController, StabilityConstants};
use crate::delay::{
    integrate_path, Controller, DelaySpec, InitialFunction, IntegratorConfig, PathExit, PathResult, RddeSystem,
};
use crate::error::{Error, Result};
use crate::gains::{sandwich_factor, z_transform};
use crate::noise::{path_processes, NoiseSpec};

/// Pointwise Monte Carlo estimate of `E|x(t)|^m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub order: f64,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub paths: usize,
}

impl MomentSeries {
    /// Averages `value(path, k)^m` across paths. All paths must share the
    /// grid of the first.
    pub fn from_paths<F>(paths: &[PathResult], order: f64, value: F) -> Result<Self>
    where
        F: Fn(&PathResult, usize) -> f64,
    {
        let first = paths
            .first()
            .ok_or_else(|| Error::param("paths", "need at least one path"))?;
        if !(order > 0.0) {
            return Err(Error::param("m", format!("moment order must be > 0, got {order}")));
        }
        let len = first.len();
        if let Some(p) = paths.iter().find(|p| p.times != first.times) {
            return Err(Error::GridMismatch(format!(
                "path with {} samples does not share the {len}-sample grid",
                p.len()
            )));
        }
        let n = paths.len() as f64;
        let mut mean = vec![0.0; len];
        let mut sq = vec![0.0; len];
        for p in paths {
            for k in 0..len {
                let v = value(p, k).abs().powf(order);
                mean[k] += v;
                sq[k] += v * v;
            }
        }
        let std_err = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                if paths.len() < 2 {
                    0.0
                } else {
                    let var = ((s / n - *m * *m) * n / (n - 1.0)).max(0.0);
                    (var / n).sqrt()
                }
            })
            .collect();
        Ok(MomentSeries {
            times: first.times.clone(),
            order,
            mean,
            std_err,
            paths: paths.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A closed loop with its noise model, initial function and master seed.
/// Path `i` draws its noise phases from `(seed, i)`.
#[derive(Clone)]
pub struct Ensemble {
    pub system: Arc<dyn RddeSystem>,
    pub controller: Arc<dyn Controller>,
    pub noise: Vec<NoiseSpec>,
    pub init: InitialFunction,
    pub integrator: IntegratorConfig,
    pub seed: u64,
}

impl std::fmt::Debug for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ensemble")
            .field("noise", &self.noise)
            .field("init", &self.init)
            .field("integrator", &self.integrator)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl Ensemble {
    pub fn path(&self, i: usize) -> Result<PathResult> {
        let procs = path_processes(&self.noise, self.seed, i as u64);
        integrate_path(
            self.system.as_ref(),
            self.controller.as_ref(),
            &procs,
            &self.init,
            &self.integrator,
        )
    }

    /// Integrates paths `0..n` in parallel, in path order. Any explosion turns
    /// into [`Error::UnstableEnsemble`] listing every exploded path.
    pub fn run(&self, n: usize) -> Result<Vec<PathResult>> {
        if n == 0 {
            return Err(Error::param("paths", "need at least one path"));
        }
        let paths = (0..n)
            .into_par_iter()
            .map(|i| self.path(i))
            .collect::<Result<Vec<_>>>()?;
        let explosions: Vec<(usize, f64)> = paths
            .iter()
            .enumerate()
            .filter_map(|(i, p)| match p.exit {
                PathExit::Exploded { t, .. } => Some((i, t)),
                PathExit::Completed => None,
            })
            .collect();
        if explosions.is_empty() {
            Ok(paths)
        } else {
            Err(Error::UnstableEnsemble { explosions })
        }
    }
}

/// `E|x(t)|^m` over `n` paths of the ensemble.
pub fn monte_carlo_moments(ens: &Ensemble, m: f64, n: usize) -> Result<MomentSeries> {
    let paths = ens.run(n)?;
    MomentSeries::from_paths(&paths, m, |p, k| p.state_norm(k))
}

/// `A e^{-c (t - t0)} + B`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    #[serde(rename = "A")]
    pub a: f64,
    pub c: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub t0: f64,
    /// Whether the fitted rate was positive before projection onto `c >= 0`.
    pub decaying: bool,
    /// `max_t series / envelope`.
    pub slack: f64,
    /// Root-mean-square of `series - envelope`.
    pub residual: f64,
    /// `A / |phi|^m`, the empirical gain on the initial condition.
    pub initial_gain: f64,
}

impl EnvelopeFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.a * (-self.c * (t - self.t0)).exp() + self.b
    }

    pub fn inflated(&self, factor: f64) -> Self {
        EnvelopeFit {
            a: self.a * factor,
            b: self.b * factor,
            slack: self.slack / factor,
            initial_gain: self.initial_gain * factor,
            ..self.clone()
        }
    }

    /// Whether `series <= envelope` at every grid point.
    pub fn dominates(&self, series: &MomentSeries) -> bool {
        series.times.iter().zip(&series.mean).all(|(&t, &v)| v <= self.eval(t))
    }
}

const FIT_TAIL: f64 = 0.25;
const FIT_FLOOR: f64 = 1e-3;

/// Two-stage fit: `B` is the tail mean (last quarter), then `log(series - B)`
/// is fitted linearly from the peak of the excess over the contiguous run where
/// the excess stays above a thousandth of the peak.
pub fn fit_nss_envelope(series: &MomentSeries, phi_norm: f64) -> Result<EnvelopeFit> {
    let n = series.len();
    if n < 10 {
        return Err(Error::param(
            "series",
            format!("envelope fit needs at least 10 points, got {n}"),
        ));
    }
    let t = &series.times;
    let y = &series.mean;
    let t0 = t[0];
    let b = ultimate_bound(series, FIT_TAIL)?.max(0.0);
    let excess: Vec<f64> = y.iter().map(|v| v - b).collect();
    let (peak, peak_val) =
        excess.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );

    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (mut a, mut c, mut decaying) = (0.0, 0.0, false);
    if peak_val > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        let floor = FIT_FLOOR * peak_val;
        let end = (peak..n).find(|&i| excess[i] <= floor).unwrap_or(n);
        if end - peak >= 2 {
            let pts: Vec<(f64, f64)> = (peak..end).map(|i| (t[i] - t[peak], excess[i].ln())).collect();
            let m = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let (mx, my) = (sx / m, sy / m);
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let intercept = my - slope * mx;
            decaying = slope < 0.0;
            c = (-slope).max(0.0);
            a = (intercept + c * (t[peak] - t0)).exp();
        } else {
            a = peak_val * (c * (t[peak] - t0)).exp();
        }
    }

    let mut fit = EnvelopeFit {
        a,
        c,
        b,
        t0,
        decaying,
        slack: 0.0,
        residual: 0.0,
        initial_gain: 0.0,
    };
    let mut slack = 0.0_f64;
    let mut ss = 0.0;
    for (&ti, &v) in t.iter().zip(y) {
        let e = fit.eval(ti);
        let r = if e > 0.0 {
            v / e
        } else if v > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        slack = slack.max(r);
        ss += (v - e).powi(2);
    }
    fit.slack = slack;
    fit.residual = (ss / n as f64).sqrt();
    let pm = phi_norm.abs().powf(series.order);
    fit.initial_gain = if pm > 0.0 { a / pm } else { f64::INFINITY };
    Ok(fit)
}

/// Tail mean of the last `tail_fraction` of the series.
pub fn ultimate_bound(series: &MomentSeries, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::param(
            "tail_fraction",
            format!("must lie in (0, 1], got {tail_fraction}"),
        ));
    }
    let n = series.len();
    if n == 0 {
        return Err(Error::param("series", "empty moment series"));
    }
    let k = ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    Ok(series.mean[n - k..].iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NssPVerdict {
    pub epsilon: f64,
    /// Fraction of paths inside the envelope at every grid time.
    pub fraction: f64,
    pub pass: bool,
}

/// Probability version of the envelope bound: path-wise `|x(t)|^m` against an
/// envelope fitted to `E|x(t)|^m`.
pub fn empirical_nss_p(paths: &[PathResult], envelope: &EnvelopeFit, order: f64, epsilon: f64) -> Result<NssPVerdict> {
    empirical_nss_p_with(paths, envelope, order, epsilon, |p, k| p.state_norm(k))
}

/// [`empirical_nss_p`] for an arbitrary per-sample magnitude.
pub fn empirical_nss_p_with<F>(
    paths: &[PathResult],
    envelope: &EnvelopeFit,
    order: f64,
    epsilon: f64,
    value: F,
) -> Result<NssPVerdict>
where
    F: Fn(&PathResult, usize) -> f64 + Sync,
{
    if paths.is_empty() {
        return Err(Error::param("paths", "need at least one path"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    let inside = paths
        .iter()
        .filter(|p| (0..p.len()).all(|k| value(p, k).abs().powf(order) <= envelope.eval(p.times[k])))
        .count();
    let fraction = inside as f64 / paths.len() as f64;
    Ok(NssPVerdict {
        epsilon,
        fraction,
        pass: fraction >= 1.0 - epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationReport {
    /// Fraction of interior points with `V' <= -c V + c3 |xi|^r + dc + tol`.
    pub fraction: f64,
    /// Largest `V' - (-c V + c3 |xi|^r + dc)` over interior points.
    pub worst: f64,
    pub points: usize,
}

impl DissipationReport {
    /// Pools several reports, weighting fractions by point counts.
    pub fn merge(reports: &[DissipationReport]) -> Option<DissipationReport> {
        let points: usize = reports.iter().map(|r| r.points).sum();
        if points == 0 {
            return None;
        }
        let ok: f64 = reports.iter().map(|r| r.fraction * r.points as f64).sum();
        Some(DissipationReport {
            fraction: ok / points as f64,
            worst: reports.iter().map(|r| r.worst).fold(f64::NEG_INFINITY, f64::max),
            points,
        })
    }
}

/// Central-difference check of `V' <= -c V + c3 |xi|^r + dc` at interior
/// grid points.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_dissipation_check(
    times: &[f64],
    v: &[f64],
    xi_norm: &[f64],
    c: f64,
    c3: f64,
    r: f64,
    dc: f64,
    tol: f64,
) -> Result<DissipationReport> {
    let n = times.len();
    if n < 3 {
        return Err(Error::param("V", format!("need at least 3 samples, got {n}")));
    }
    if v.len() != n || xi_norm.len() != n {
        return Err(Error::GridMismatch(format!(
            "{n} times, {} functional values, {} noise samples",
            v.len(),
            xi_norm.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be > 0, got {tol}")));
    }
    let mut ok = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for k in 1..n - 1 {
        let dv = (v[k + 1] - v[k - 1]) / (times[k + 1] - times[k - 1]);
        let excess = dv - (-c * v[k] + c3 * xi_norm[k].powf(r) + dc);
        if excess <= tol {
            ok += 1;
        }
        worst = worst.max(excess);
    }
    Ok(DissipationReport {
        fraction: ok as f64 / (n - 2) as f64,
        worst,
        points: n - 2,
    })
}

/// `|xi(t_k)|` along a path.
pub fn noise_norms(path: &PathResult) -> Vec<f64> {
    (0..path.len())
        .map(|k| path.noise_at(k).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Recording grid extended backwards over `[t0 - tau_max, t0)` with the
/// initial function, as `(times, states)`; the path starts at index
/// `times.len() - path.len()`.
fn extended_grid(path: &PathResult, init: &InitialFunction, tau_max: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let t0 = path.times[0];
    let h = if path.len() > 1 { path.times[1] - t0 } else { 1.0 };
    let mut times = Vec::with_capacity(path.len());
    let mut states = Vec::with_capacity(path.len());
    if tau_max > 0.0 {
        let j = (tau_max / h).ceil() as usize;
        for i in 0..j {
            let t = t0 - tau_max + i as f64 * (tau_max / j as f64);
            times.push(t);
            states.push(init.at(t));
        }
    }
    for k in 0..path.len() {
        times.push(path.times[k]);
        states.push(path.state(k).to_vec());
    }
    (times, states)
}

/// `int_{a_k}^{t_k} e^{s - t_k} w(s) ds` for every `k >= start`, with
/// `a_k = t_k - tau(t_k)`, by the trapezoidal rule on the grid (the partial
/// first interval closed by linear interpolation of `w`). Runs a discounted
/// running sum, so each value costs O(1) after locating `a_k`.
pub fn exp_window_integrals(times: &[f64], w: &[f64], start: usize, delay: &DelaySpec) -> Result<Vec<f64>> {
    let n = times.len();
    if w.len() != n {
        return Err(Error::GridMismatch(format!("{n} times, {} weights", w.len())));
    }
    // c[k] = int_{t_0}^{t_k} e^{s - t_k} w ds
    let mut c = vec![0.0; n];
    for k in 1..n {
        let h = times[k] - times[k - 1];
        let d = (-h).exp();
        c[k] = d * c[k - 1] + 0.5 * h * (d * w[k - 1] + w[k]);
    }
    let mut out = Vec::with_capacity(n.saturating_sub(start));
    let mut j = 0;
    for k in start..n {
        let tk = times[k];
        let a = tk - delay.tau(tk);
        if a >= tk {
            out.push(0.0);
            continue;
        }
        if a < times[0] - 1e-12 * (1.0 + times[0].abs()) {
            return Err(Error::History(crate::delay::HistoryError::Underflow {
                t: a,
                earliest: times[0],
            }));
        }
        while j + 1 < k && times[j + 1] <= a {
            j += 1;
        }
        while j > 0 && times[j] > a {
            j -= 1;
        }
        let (t_lo, t_hi) = (times[j], times[j + 1]);
        let frac = ((a - t_lo) / (t_hi - t_lo)).clamp(0.0, 1.0);
        let wa = w[j] + frac * (w[j + 1] - w[j]);
        let head = 0.5 * (t_hi - a) * ((a - tk).exp() * wa + (t_hi - tk).exp() * w[j + 1]);
        let rest = c[k] - (t_hi - tk).exp() * c[j + 1];
        out.push(head + rest);
    }
    Ok(out)
}

/// Per-sample values of the state-feedback functional and the two sides of
/// its sandwich bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LkSeries {
    pub v: Vec<f64>,
    /// `|z(t)|^2 / 2`.
    pub lower: Vec<f64>,
    /// `(1 + 2 n^2 tau) / 2 * sup_{[t - tau_max, t]} |z|^2`.
    pub upper: Vec<f64>,
}

pub fn state_feedback_lk_series(
    path: &PathResult,
    beta: &[f64],
    delay: &DelaySpec,
    init: &InitialFunction,
) -> Result<LkSeries> {
    if path.is_empty() {
        return Err(Error::param("path", "empty path"));
    }
    let n = path.dim;
    let tau_max = delay.tau_max();
    let (times, states) = extended_grid(path, init, tau_max);
    let z: Vec<Vec<f64>> = states.iter().map(|x| z_transform(x, beta)).collect();
    let zsq: Vec<f64> = z.iter().map(|z| z.iter().map(|v| v * v).sum()).collect();
    let w: Vec<f64> = z
        .iter()
        .map(|z| z.iter().enumerate().map(|(i, v)| (n - i) as f64 * v * v).sum())
        .collect();
    let pre = times.len() - path.len();
    let integrals = exp_window_integrals(&times, &w, pre, delay)?;
    let factor = sandwich_factor(n, tau_max);
    let mut out = LkSeries {
        v: Vec::with_capacity(path.len()),
        lower: Vec::with_capacity(path.len()),
        upper: Vec::with_capacity(path.len()),
    };
    let mut window: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut next = 0;
    for (k, integral) in integrals.into_iter().enumerate() {
        let idx = pre + k;
        let t = times[idx];
        // sliding maximum of |z|^2 over [t - tau_max, t]
        while next <= idx {
            while window.back().is_some_and(|&b| zsq[b] <= zsq[next]) {
                window.pop_back();
            }
            window.push_back(next);
            next += 1;
        }
        while window.front().is_some_and(|&f| times[f] < t - tau_max - 1e-12) {
            window.pop_front();
        }
        let sup = window.front().map_or(0.0, |&f| zsq[f]);
        out.lower.push(0.5 * zsq[idx]);
        out.v.push(0.5 * zsq[idx] + integral);
        out.upper.push(factor * sup);
    }
    Ok(out)
}

/// The adaptive functional along a path of the adaptive closed loop; the
/// internal columns are `(xhat, thetahat)`.
pub fn adaptive_lk_series(
    path: &PathResult,
    ctrl: &AdaptiveController,
    consts: &StabilityConstants,
    delay: &DelaySpec,
    init: &InitialFunction,
) -> Result<Vec<f64>> {
    if path.is_empty() {
        return Err(Error::param("path", "empty path"));
    }
    let (times, states) = extended_grid(path, init, delay.tau_max());
    let w: Vec<f64> = states.iter().map(|x| ctrl.q_bar(x[0]) * x[0]).collect();
    let pre = times.len() - path.len();
    let integrals = exp_window_integrals(&times, &w, pre, delay)?;
    let q = path.internal_dim;
    let mu = ctrl.params().mu;
    let kappa = &ctrl.observer().kappa;
    let p = &ctrl.observer().p;
    (0..path.len())
        .map(|k| {
            let x = path.state(k);
            let int = path.internal_at(k);
            let (xhat, theta_hat) = (&int[..q - 1], int[q - 1]);
            let e = observer_error(x, xhat, kappa, consts.theta_star);
            let mut ep = 0.0;
            for i in 0..e.len() {
                for j in 0..e.len() {
                    ep += e[i] * p[(i, j)] * e[j];
                }
            }
            let out = ctrl.control(x[0], xhat, theta_hat)?;
            let zq: f64 = out.diagnostics.z.iter().map(|z| 0.5 * z * z).sum();
            let tt = consts.theta - theta_hat;
            Ok(ep + tt * tt / (2.0 * mu) + zq + integrals[k])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64, t1: f64, h: f64) -> MomentSeries {
        let n = (t1 / h).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let mean = times.iter().map(|&t| f(t)).collect();
        MomentSeries {
            std_err: vec![0.0; n + 1],
            times,
            order: 2.0,
            mean,
            paths: 1,
        }
    }

    #[test]
    fn fit_recovers_exponential_plus_asymptote() {
        let s = series(|t| 2.0 * (-t).exp() + 0.1, 20.0, 0.01);
        let f = fit_nss_envelope(&s, 1.0).unwrap();
        assert!((f.a - 2.0).abs() < 0.02, "{f:?}");
        assert!((f.c - 1.0).abs() < 0.01, "{f:?}");
        assert!((f.b - 0.1).abs() < 0.001, "{f:?}");
        assert!(f.decaying);
    }

    #[test]
    fn fit_of_constant_and_zero() {
        let f = fit_nss_envelope(&series(|_| 0.7, 10.0, 0.1), 1.0).unwrap();
        assert!(f.a.abs() < 1e-9 && (f.b - 0.7).abs() < 1e-12);
        let f = fit_nss_envelope(&series(|_| 0.0, 10.0, 0.1), 1.0).unwrap();
        assert_eq!((f.a, f.b), (0.0, 0.0));
        assert!(fit_nss_envelope(&series(|_| 1.0, 0.8, 0.1), 1.0).is_err());
    }

    #[test]
    fn tail_means() {
        assert!((ultimate_bound(&series(|_| 3.0, 1.0, 0.1), 0.5).unwrap() - 3.0).abs() < 1e-12);
        let b = ultimate_bound(&series(|t| (-2.0 * t).exp(), 20.0, 1e-3), 0.25).unwrap();
        assert!(b <= (-30.0_f64).exp());
        assert!(ultimate_bound(&series(|_| 3.0, 1.0, 0.1), 0.0).is_err());
    }

    #[test]
    fn dissipation_trivial_and_exact() {
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
        let z = vec![0.0; t.len()];
        let r = lyapunov_dissipation_check(&t, &z, &z, 1.0, 0.0, 4.0, 0.0, 1e-2).unwrap();
        assert_eq!(r.fraction, 1.0);
        let v: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let r = lyapunov_dissipation_check(&t, &v, &z, 1.0, 0.0, 4.0, 0.0, 1e-6).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert!(r.worst.abs() < 1e-6);
        assert!(lyapunov_dissipation_check(&t[..2], &v[..2], &z[..2], 1.0, 0.0, 4.0, 0.0, 1e-2).is_err());
    }

    #[test]
    fn merge_weights_by_points() {
        let a = DissipationReport {
            fraction: 1.0,
            worst: -1.0,
            points: 3,
        };
        let b = DissipationReport {
            fraction: 0.0,
            worst: 2.0,
            points: 1,
        };
        let m = DissipationReport::merge(&[a, b]).unwrap();
        assert_eq!((m.fraction, m.worst, m.points), (0.75, 2.0, 4));
    }
}
