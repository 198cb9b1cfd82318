use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::history::{norm, HistoryBuffer};
use super::spec::DelaySpec;
use crate::error::{Error, Result};
use crate::noise::NoiseProcess;

/// `x' = f(t, x(t - tau(t)), x, u) + g(t, x(t - tau(t)), x) xi(t)`.
pub trait RddeSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn delay(&self) -> &DelaySpec;
    /// Writes `f` into `out` (length `dim`).
    fn drift(&self, t: f64, xd: &[f64], x: &[f64], u: f64, out: &mut [f64]);
    /// Writes `g` into `out` as a row-major `dim x noise_dim` matrix.
    fn diffusion(&self, t: f64, xd: &[f64], x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// Only `y = x_1` is measured.
    Output,
    FullState,
}

#[derive(Debug, Clone, Copy)]
pub enum Observation<'a> {
    Output(f64),
    FullState(&'a [f64]),
}

impl Observation<'_> {
    pub fn output(&self) -> f64 {
        match self {
            Observation::Output(y) => *y,
            Observation::FullState(x) => x[0],
        }
    }
}

/// A control law, possibly with internal dynamics (observer states,
/// parameter estimates) integrated alongside the plant.
pub trait Controller: Send + Sync {
    fn access(&self) -> Access;

    fn internal_dim(&self) -> usize {
        0
    }

    fn initial_internal(&self) -> Vec<f64> {
        vec![0.0; self.internal_dim()]
    }

    /// Returns `u` and writes the internal-state derivative into `d_internal`.
    fn evaluate(&self, t: f64, obs: Observation<'_>, internal: &[f64], d_internal: &mut [f64]) -> Result<f64>;
}

/// The open loop, `u = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoController;

impl Controller for NoController {
    fn access(&self) -> Access {
        Access::FullState
    }

    fn evaluate(&self, _: f64, _: Observation<'_>, _: &[f64], _: &mut [f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Initial function on `[t0 - tau_max, t0]`.
#[derive(Clone)]
pub enum InitialFunction {
    /// A point value extended backwards as a constant.
    Constant(Vec<f64>),
    Callable(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl InitialFunction {
    pub fn constant(x0: impl Into<Vec<f64>>) -> Self {
        InitialFunction::Constant(x0.into())
    }

    pub fn callable(f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        InitialFunction::Callable(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        match self {
            InitialFunction::Constant(x) => x.clone(),
            InitialFunction::Callable(f) => f(t),
        }
    }
}

impl fmt::Debug for InitialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialFunction::Constant(x) => f.debug_tuple("Constant").field(x).finish(),
            InitialFunction::Callable(_) => f.write_str("Callable(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub t0: f64,
    /// End time `T`.
    pub horizon: f64,
    /// Recording step `h`.
    pub step: f64,
    /// RK4 steps per recording step; the internal step is `step / substeps`.
    pub substeps: usize,
    pub k_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            t0: 0.0,
            horizon: 20.0,
            step: 1e-3,
            substeps: 1,
            k_max: 1e6,
        }
    }
}

impl IntegratorConfig {
    pub fn new(t0: f64, horizon: f64, step: f64) -> Self {
        IntegratorConfig {
            t0,
            horizon,
            step,
            ..Default::default()
        }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::param("step", format!("must be > 0, got {}", self.step)));
        }
        if !(self.horizon > self.t0) {
            return Err(Error::param(
                "horizon",
                format!("must exceed t0={}, got {}", self.t0, self.horizon),
            ));
        }
        if self.substeps == 0 {
            return Err(Error::param("substeps", "must be >= 1"));
        }
        if !(self.k_max > 0.0) {
            return Err(Error::param("k_max", "must be > 0"));
        }
        Ok(())
    }

    /// Number of recording intervals.
    pub fn records(&self) -> usize {
        ((self.horizon - self.t0) / self.step).round() as usize
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.records()).map(|k| self.t0 + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathExit {
    Completed,
    /// `|x|` reached `k` (or became non-finite) at time `t`.
    Exploded {
        t: f64,
        k: f64,
    },
}

/// A recorded sample path. Every array has one row per recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub dim: usize,
    pub noise_dim: usize,
    pub internal_dim: usize,
    pub times: Vec<f64>,
    /// Row-major `len x dim`.
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    /// Row-major `len x noise_dim`.
    pub noise: Vec<f64>,
    /// Row-major `len x internal_dim`.
    pub internal: Vec<f64>,
    pub exit: PathExit,
}

impl PathResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn noise_at(&self, k: usize) -> &[f64] {
        &self.noise[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    pub fn internal_at(&self, k: usize) -> &[f64] {
        &self.internal[k * self.internal_dim..(k + 1) * self.internal_dim]
    }

    pub fn output(&self, k: usize) -> f64 {
        self.states[k * self.dim]
    }

    pub fn state_norm(&self, k: usize) -> f64 {
        norm(self.state(k))
    }

    pub fn exploded(&self) -> bool {
        matches!(self.exit, PathExit::Exploded { .. })
    }

    pub fn history(&self) -> HistoryBuffer {
        HistoryBuffer::from_samples(self.dim, &self.times, &self.states).expect("recorded grid is strictly increasing")
    }
}

/// First recorded time with `|x| >= k`.
pub fn explosion_monitor(path: &PathResult, k: f64) -> Option<f64> {
    (0..path.len())
        .find(|&i| path.state_norm(i) >= k)
        .map(|i| path.times[i])
}

enum StageFail {
    Explode,
    Fatal(Error),
}

impl From<Error> for StageFail {
    fn from(e: Error) -> Self {
        StageFail::Fatal(e)
    }
}

struct Stepper<'a> {
    sys: &'a dyn RddeSystem,
    ctrl: &'a dyn Controller,
    noise: &'a [NoiseProcess],
    n: usize,
    m: usize,
    xd: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    xi: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Stepper<'_> {
    /// Augmented derivative at stage time `s`, state `y`; `(tn, xn)` is the
    /// step start used when the delayed time falls inside the current step.
    fn rhs(&mut self, s: f64, y: &[f64], hist: &HistoryBuffer, tn: f64, out_k: usize) -> Result<f64, StageFail> {
        let n = self.n;
        let sd = s - self.sys.delay().tau(s);
        if sd <= tn {
            hist.query(sd, &mut self.xd).map_err(Error::from)?;
        } else {
            let xn = hist.last_state().expect("history is never empty here");
            let w = (sd - tn) / (s - tn);
            for i in 0..n {
                self.xd[i] = xn[i] + w * (y[i] - xn[i]);
            }
        }
        let x = &y[..n];
        let internal = &y[n..];
        let obs = match self.ctrl.access() {
            Access::Output => Observation::Output(x[0]),
            Access::FullState => Observation::FullState(x),
        };
        let u = {
            let out = &mut self.k[out_k];
            match self.ctrl.evaluate(s, obs, internal, &mut out[n..]) {
                Ok(u) => u,
                Err(Error::Numerical(_)) => return Err(StageFail::Explode),
                Err(e) => return Err(StageFail::Fatal(e)),
            }
        };
        if !u.is_finite() {
            return Err(StageFail::Explode);
        }
        self.sys.drift(s, &self.xd, x, u, &mut self.f);
        self.sys.diffusion(s, &self.xd, x, &mut self.g);
        for (xi, p) in self.xi.iter_mut().zip(self.noise) {
            *xi = p.sample(s);
        }
        let out = &mut self.k[out_k];
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let gx: f64 = (0..self.m).map(|j| self.g[i * self.m + j] * self.xi[j]).sum();
            *o = self.f[i] + gx;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(StageFail::Explode);
        }
        Ok(u)
    }

    /// One RK4 step from `(t, y)`; returns `u` at the first stage.
    fn step(&mut self, t: f64, h: f64, y: &mut [f64], hist: &HistoryBuffer) -> Result<f64, StageFail> {
        let u = self.rhs(t, y, hist, t, 0)?;
        for (kprev, c) in [(0usize, 0.5), (1, 0.5), (2, 1.0)] {
            for ((s, yi), ki) in self.stage.iter_mut().zip(y.iter()).zip(&self.k[kprev]) {
                *s = yi + c * h * ki;
            }
            let stage = std::mem::take(&mut self.stage);
            let r = self.rhs(t + c * h, &stage, hist, t, kprev + 1);
            self.stage = stage;
            r?;
        }
        let [k0, k1, k2, k3] = &self.k;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h / 6.0 * (k0[i] + 2.0 * k1[i] + 2.0 * k2[i] + k3[i]);
        }
        Ok(u)
    }
}

/// Integrates one sample path with classical RK4 on the augmented
/// (plant + controller) state.
///
/// Delayed states come from the history buffer by linear interpolation; when
/// the delayed time falls inside the current step, the value is interpolated
/// between the step start and the current stage state. The RK4 step is
/// `cfg.step / cfg.substeps`; states, inputs and noise are recorded every
/// `cfg.step`.
pub fn integrate_path(
    sys: &dyn RddeSystem,
    ctrl: &dyn Controller,
    noise: &[NoiseProcess],
    init: &InitialFunction,
    cfg: &IntegratorConfig,
) -> Result<PathResult> {
    cfg.validate()?;
    let n = sys.dim();
    let m = sys.noise_dim();
    let q = ctrl.internal_dim();
    if noise.len() != m {
        return Err(Error::param(
            "noise",
            format!("system has {m} noise channel(s), got {}", noise.len()),
        ));
    }
    let hs = cfg.step / cfg.substeps as f64;
    let tau_max = sys.delay().tau_max();

    let mut hist = HistoryBuffer::new(n, tau_max + 2.0 * hs);
    let x0 = init.at(cfg.t0);
    if x0.len() != n {
        return Err(Error::param(
            "initial",
            format!("initial state has length {}, system dimension is {n}", x0.len()),
        ));
    }
    if tau_max > 0.0 {
        match init {
            InitialFunction::Constant(x) => hist.push(cfg.t0 - tau_max, x)?,
            InitialFunction::Callable(f) => {
                let j = (tau_max / hs).ceil() as usize;
                for i in 0..j {
                    let t = cfg.t0 - tau_max + i as f64 * (tau_max / j as f64);
                    hist.push(t, &f(t))?;
                }
            }
        }
    }
    hist.push(cfg.t0, &x0)?;

    let mut y = x0.clone();
    let internal0 = ctrl.initial_internal();
    if internal0.len() != q {
        return Err(Error::param("controller", "initial internal state has wrong length"));
    }
    y.extend_from_slice(&internal0);

    let records = cfg.records();
    let mut out = PathResult {
        dim: n,
        noise_dim: m,
        internal_dim: q,
        times: Vec::with_capacity(records + 1),
        states: Vec::with_capacity((records + 1) * n),
        inputs: Vec::with_capacity(records + 1),
        noise: Vec::with_capacity((records + 1) * m),
        internal: Vec::with_capacity((records + 1) * q),
        exit: PathExit::Completed,
    };
    let mut st = Stepper {
        sys,
        ctrl,
        noise,
        n,
        m,
        xd: vec![0.0; n],
        f: vec![0.0; n],
        g: vec![0.0; n * m],
        xi: vec![0.0; m],
        k: std::array::from_fn(|_| vec![0.0; n + q]),
        stage: vec![0.0; n + q],
    };
    let record = |out: &mut PathResult, t: f64, y: &[f64], u: f64| {
        out.times.push(t);
        out.states.extend_from_slice(&y[..n]);
        out.inputs.push(u);
        out.noise.extend(noise.iter().map(|p| p.sample(t)));
        out.internal.extend_from_slice(&y[n..]);
    };

    let total = records * cfg.substeps;
    let mut y_prev = vec![0.0; n + q];
    for s in 0..total {
        let t = cfg.t0 + s as f64 * hs;
        let t_next = cfg.t0 + (s + 1) as f64 * hs;
        y_prev.copy_from_slice(&y);
        match st.step(t, t_next - t, &mut y, &hist) {
            Ok(u) => {
                if s % cfg.substeps == 0 {
                    let tr = cfg.t0 + (s / cfg.substeps) as f64 * cfg.step;
                    record(&mut out, tr, &y_prev, u);
                }
            }
            Err(StageFail::Explode) => {
                out.exit = PathExit::Exploded { t, k: cfg.k_max };
                return Ok(out);
            }
            Err(StageFail::Fatal(e)) => return Err(e),
        }
        let xn = norm(&y[..n]);
        if !(xn < cfg.k_max) || y[n..].iter().any(|v| !v.is_finite()) {
            out.exit = PathExit::Exploded {
                t: t_next,
                k: cfg.k_max,
            };
            return Ok(out);
        }
        hist.push(t_next, &y[..n])?;
    }
    let mut dummy = vec![0.0; q];
    let t_end = cfg.t0 + records as f64 * cfg.step;
    let obs = match ctrl.access() {
        Access::Output => Observation::Output(y[0]),
        Access::FullState => Observation::FullState(&y[..n]),
    };
    let u = ctrl.evaluate(t_end, obs, &y[n..], &mut dummy).unwrap_or(f64::NAN);
    record(&mut out, t_end, &y, u);
    Ok(out)
}
