//! State-feedback backstepping for strict-feedback systems.
//!
//! The stabilizing functions are linear, `alpha_i = -beta_i z_i`, with the
//! coordinates `z_1 = x_1`, `z_{i+1} = x_{i+1} + beta_i z_i`, so the control
//! is the linear feedback `u = -beta_n z_n = -sum_i (prod_{j>=i} beta_j) x_i`.
//! The constants `beta_i` are built level by level from the growth bound
//! `theta_bar`, the delay constants and the design weights `pi_i`, `pi_ij`.

use serde::{Deserialize, Serialize};

use crate::delay::{Access, Controller, DelaySpec, HistoryBuffer, Observation};
use crate::error::{Error, Result};

/// Design weights: `pi[i]` for each level, `pij[i][j]` for `j < i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    pub pi: Vec<f64>,
    pub pij: Vec<Vec<f64>>,
}

impl GainParams {
    /// All weights equal to one.
    pub fn ones(n: usize) -> Self {
        GainParams {
            pi: vec![1.0; n],
            pij: (0..n).map(|i| vec![1.0; i]).collect(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.pi.len() != n {
            return Err(Error::param(
                "pi",
                format!("expected {n} entries, got {}", self.pi.len()),
            ));
        }
        if let Some(p) = self.pi.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::param("pi", format!("weights must be positive, got {p}")));
        }
        if self.pij.len() != n {
            return Err(Error::param(
                "pij",
                format!("expected {n} rows, got {}", self.pij.len()),
            ));
        }
        for (i, row) in self.pij.iter().enumerate() {
            if row.len() != i {
                return Err(Error::param(
                    "pij",
                    format!("row {} must have {i} entries, got {}", i + 1, row.len()),
                ));
            }
            if let Some(p) = row.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
                return Err(Error::param("pij", format!("weights must be positive, got {p}")));
            }
        }
        Ok(())
    }

    /// `max{ max_{j<n}(pi_j + sum_{l>j} pi_lj), pi_n }`.
    pub fn pi_tilde(&self) -> f64 {
        let n = self.pi.len();
        let mut best = self.pi[n - 1];
        for j in 0..n.saturating_sub(1) {
            let s: f64 = self.pi[j] + (j + 1..n).map(|l| self.pij[l][j]).sum::<f64>();
            best = best.max(s);
        }
        best
    }
}

/// The synthesized constants. Vectors are indexed by zero-based level; the
/// auxiliary `eta`/`zeta` families are zero at level 0, where they are not
/// defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub n: usize,
    pub params: GainParams,
    pub tau_max: f64,
    pub tau_star: f64,
    pub theta_bar: f64,
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `xi[i][j] = prod_{k=j}^{i-1} beta_k` for `j < i`.
    pub xi: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
    pub eta_bar: Vec<f64>,
    pub eta_tilde: Vec<f64>,
    pub zeta: Vec<f64>,
    pub zeta_bar: Vec<f64>,
    pub zeta_tilde: Vec<f64>,
    pub pi_tilde: f64,
}

pub fn synthesize_gains(theta_bar: f64, n: usize, delay: &DelaySpec, params: &GainParams) -> Result<GainSchedule> {
    if n == 0 {
        return Err(Error::param("n", "order must be >= 1"));
    }
    if !(theta_bar > 0.0 && theta_bar.is_finite()) {
        return Err(Error::param("theta_bar", format!("must be > 0, got {theta_bar}")));
    }
    let tau = delay.tau_max();
    let tau_star = delay.tau_star();
    if !(tau_star < 1.0) {
        return Err(Error::InvalidDelay(format!(
            "delay derivative bound {tau_star} must be < 1"
        )));
    }
    params.validate(n)?;

    let th = theta_bar;
    let et = tau.exp();
    let r = 1.0 / (1.0 - tau_star);
    let nf = n as f64;

    let mut s = GainSchedule {
        n,
        params: params.clone(),
        tau_max: tau,
        tau_star,
        theta_bar,
        beta: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        xi: vec![Vec::new()],
        eta: vec![0.0],
        eta_bar: vec![0.0],
        eta_tilde: vec![0.0],
        zeta: vec![0.0],
        zeta_bar: vec![0.0],
        zeta_tilde: vec![0.0],
        pi_tilde: params.pi_tilde(),
    };

    let omega1 = th + th * th * et * r / 2.0;
    let lambda1 = th / 2.0 + th * th * et * r / 8.0 + 1.0 / (16.0 * params.pi[0]);
    s.omega.push(omega1);
    s.lambda.push(lambda1);
    s.beta.push(2.0 * nf + omega1 + lambda1 + 0.5);

    for i in 1..n {
        // one-based level number
        let lvl = (i + 1) as f64;
        let im1 = i as f64;
        let xi: Vec<f64> = (0..i).map(|j| s.beta[j..i].iter().product()).collect();
        let eta = xi.iter().fold(0.0_f64, |m, &x| m.max(th).max(x).max(x * th));
        let zeta = xi.iter().fold(0.0_f64, |m, &x| m.max(th / 2.0).max(th * x / 2.0));
        let max_one_plus_beta = s.beta.iter().fold(0.0_f64, |m, &b| m.max(1.0 + b));
        let eta_bar = lvl * eta;
        let eta_tilde = eta_bar * max_one_plus_beta;
        let zeta_bar = lvl * zeta;
        let zeta_tilde = zeta_bar * max_one_plus_beta;

        let omega = im1 / 2.0 * eta_tilde.powi(2)
            + im1 * et * eta_tilde.powi(2) * r / 2.0
            + eta_bar
            + et * eta_bar.powi(2) * r / 2.0;
        let cross: f64 = xi.iter().zip(&params.pij[i]).map(|(x, p)| x * x / (16.0 * p)).sum();
        let lambda = im1 / 2.0 * zeta_tilde.powi(2)
            + im1 * et * zeta_tilde.powi(2) * r / 2.0
            + zeta_bar
            + et * zeta_bar.powi(2) * r / 2.0
            + 1.0 / (16.0 * params.pi[i])
            + cross;
        let beta = 1.0 + 2.0 * (nf - lvl + 1.0) + omega + lambda;

        s.xi.push(xi);
        s.eta.push(eta);
        s.eta_bar.push(eta_bar);
        s.eta_tilde.push(eta_tilde);
        s.zeta.push(zeta);
        s.zeta_bar.push(zeta_bar);
        s.zeta_tilde.push(zeta_tilde);
        s.omega.push(omega);
        s.lambda.push(lambda);
        s.beta.push(beta);
    }
    Ok(s)
}

impl GainSchedule {
    /// Plain-text table of the per-level constants.
    pub fn table(&self) -> String {
        let mut out = format!("{:>5} {:>22} {:>22} {:>22}\n", "level", "beta", "Omega", "Lambda");
        for i in 0..self.n {
            out.push_str(&format!(
                "{:>5} {:>22.15e} {:>22.15e} {:>22.15e}\n",
                i + 1,
                self.beta[i],
                self.omega[i],
                self.lambda[i]
            ));
        }
        out.push_str(&format!("pi_tilde = {}\n", self.pi_tilde));
        out
    }
}

/// `z_1 = x_1`, `z_{i+1} = x_{i+1} + beta_i z_i`.
pub fn z_transform(x: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len());
    if x.is_empty() {
        return z;
    }
    z.push(x[0]);
    for i in 1..x.len() {
        let prev = z[i - 1];
        z.push(x[i] + beta[i - 1] * prev);
    }
    z
}

/// `u = -sum_i (prod_{j>=i} beta_j) x_i`.
pub fn state_feedback_u(x: &[f64], beta: &[f64]) -> f64 {
    let mut prod = 1.0;
    let mut u = 0.0;
    for i in (0..x.len()).rev() {
        prod *= beta[i];
        u -= prod * x[i];
    }
    u
}

/// `V = sum_i [ z_i^2 / 2 + (n - i + 1) int_{t - tau(t)}^t e^{s - t} z_i(s)^2 ds ]`
/// with trapezoidal quadrature over the stored `z` history.
pub fn lk_functional(z_hist: &HistoryBuffer, t: f64, delay: &DelaySpec) -> Result<f64> {
    let n = z_hist.dim();
    let mut z = vec![0.0; n];
    z_hist.query(t, &mut z)?;
    let quad: f64 = z.iter().map(|v| 0.5 * v * v).sum();
    let integral = z_hist.integrate_window(t - delay.tau(t), t, |s, zs| {
        let w = (s - t).exp();
        zs.iter().enumerate().map(|(i, v)| (n - i) as f64 * v * v).sum::<f64>() * w
    })?;
    Ok(quad + integral)
}

/// The `(1 + 2 n^2 tau) / 2` factor of the upper sandwich bound
/// `V <= (1 + 2 n^2 tau) / 2 * sup_window |z|^2`.
pub fn sandwich_factor(n: usize, tau_max: f64) -> f64 {
    (1.0 + 2.0 * (n * n) as f64 * tau_max) / 2.0
}

/// `u = state_feedback_u(x, beta)` with full-state access.
#[derive(Debug, Clone)]
pub struct StateFeedbackController {
    beta: Vec<f64>,
}

impl StateFeedbackController {
    pub fn new(gains: &GainSchedule) -> Self {
        StateFeedbackController {
            beta: gains.beta.clone(),
        }
    }

    pub fn from_beta(beta: Vec<f64>) -> Self {
        StateFeedbackController { beta }
    }
}

impl Controller for StateFeedbackController {
    fn access(&self) -> Access {
        Access::FullState
    }

    fn evaluate(&self, _t: f64, obs: Observation<'_>, _: &[f64], _: &mut [f64]) -> Result<f64> {
        match obs {
            Observation::FullState(x) => Ok(state_feedback_u(x, &self.beta)),
            Observation::Output(_) => Err(Error::Design("state feedback needs the full state".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::Trig;

    fn ex1_delay() -> DelaySpec {
        DelaySpec::sinusoid(0.1, -0.1, 1.0, Trig::Sin)
    }

    #[test]
    fn step_one_limits() {
        let d = ex1_delay();
        let g = synthesize_gains(1e-12, 2, &d, &GainParams::ones(2)).unwrap();
        assert!(g.omega[0] < 1e-11);
        assert!((g.lambda[0] - 1.0 / 16.0).abs() < 1e-11);
        let g1 = synthesize_gains(1.0, 1, &d, &GainParams::ones(1)).unwrap();
        assert_eq!(g1.beta.len(), 1);
        assert_eq!(g1.beta[0], 2.0 + g1.omega[0] + g1.lambda[0] + 0.5);
        assert_eq!(g1.pi_tilde, 1.0);
    }

    #[test]
    fn pi_tilde_example() {
        assert_eq!(GainParams::ones(2).pi_tilde(), 2.0);
        let p = GainParams {
            pi: vec![1.0, 0.5, 4.0],
            pij: vec![vec![], vec![2.0], vec![1.0, 0.25]],
        };
        assert_eq!(p.pi_tilde(), 4.0);
    }

    #[test]
    fn invalid_inputs() {
        let fast = DelaySpec::sinusoid(2.0, 1.0, 1.5, Trig::Sin);
        assert!(matches!(
            synthesize_gains(1.0, 2, &fast, &GainParams::ones(2)),
            Err(Error::InvalidDelay(_))
        ));
        let mut p = GainParams::ones(2);
        p.pij[1][0] = 0.0;
        assert!(matches!(
            synthesize_gains(1.0, 2, &ex1_delay(), &p),
            Err(Error::Parameter { .. })
        ));
        assert!(synthesize_gains(0.0, 2, &ex1_delay(), &GainParams::ones(2)).is_err());
    }

    #[test]
    fn z_transform_cases() {
        assert_eq!(z_transform(&[0.0, 0.0], &[5.0, 7.0]), vec![0.0, 0.0]);
        assert_eq!(z_transform(&[1.0, -2.0, 3.0], &[0.0, 0.0, 0.0]), vec![1.0, -2.0, 3.0]);
        assert_eq!(state_feedback_u(&[2.0], &[3.0]), -6.0);
        assert_eq!(state_feedback_u(&[0.0, 0.0], &[3.0, 4.0]), 0.0);
    }

    #[test]
    fn constant_history_functional() {
        let (c, tau0, h) = ([0.3, -0.6], 0.15, 1e-3);
        let mut b = HistoryBuffer::new(2, f64::INFINITY);
        for k in 0..=400 {
            b.push(-0.2 + k as f64 * h, &c).unwrap();
        }
        let v = lk_functional(&b, 0.2, &DelaySpec::constant(tau0)).unwrap();
        let exact = 0.5 * (c[0] * c[0] + c[1] * c[1]) + (2.0 * c[0] * c[0] + c[1] * c[1]) * (1.0 - (-tau0).exp());
        assert!((v - exact).abs() < 1e-6);
    }
}
