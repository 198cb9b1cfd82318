use serde::Serialize;

use super::control::{AdaptiveController, AdaptiveDesignParams};
use super::observer::ObserverConfig;
use crate::delay::{DelaySpec, HistoryBuffer};
use crate::error::{Error, Result};

/// Closed-loop constants of the adaptive design. These involve the true
/// parameters and belong to the analysis layer only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityConstants {
    /// `b_0..b_n`.
    pub margins: Vec<f64>,
    pub sigma_max: f64,
    /// `max{1, theta_1..theta_n}`.
    pub theta_star: f64,
    /// `max{theta_star^2, theta_star^4}`, the parameter being estimated.
    pub theta: f64,
    /// `min{b_n / sigma_max, 1, 2 c_1..2 c_n}`.
    pub c_bar: f64,
    /// `d02 + sum d_j3`.
    pub d_bar1: f64,
    /// `theta^2 / (2 mu) + sum d_j3 / 4`.
    pub d_bar2: f64,
}

pub fn stability_constants(
    params: &AdaptiveDesignParams,
    observer: &ObserverConfig,
    theta_true: &[f64],
) -> StabilityConstants {
    let margins = params.margins(observer.b);
    let b_n = *margins.last().unwrap();
    let theta_star = theta_true.iter().cloned().fold(1.0, f64::max);
    let theta = theta_star.powi(2).max(theta_star.powi(4));
    let c_bar = params
        .c
        .iter()
        .map(|c| 2.0 * c)
        .fold((b_n / observer.sigma_max).min(1.0), f64::min);
    let sum_d3: f64 = params.dk3.iter().sum();
    StabilityConstants {
        margins,
        sigma_max: observer.sigma_max,
        theta_star,
        theta,
        c_bar,
        d_bar1: params.d02 + sum_d3,
        d_bar2: theta * theta / (2.0 * params.mu) + sum_d3 / 4.0,
    }
}

impl StabilityConstants {
    pub fn b_n(&self) -> f64 {
        *self.margins.last().unwrap()
    }

    /// `lim E|y|^2 <= (2 d_bar1 K + 2 d_bar2) / c_bar`. Requires every margin
    /// `b_k` to be positive; otherwise `c_bar` is not a decay rate and the
    /// bound is meaningless.
    pub fn regulation_bound(&self, k: f64) -> Result<f64> {
        if let Some((i, b)) = self.margins.iter().enumerate().find(|(_, b)| !(**b > 0.0)) {
            return Err(Error::Design(format!(
                "margin b_{i} = {b} is not positive (b_k = b - d01 - 1 - sum d_j1); \
                 the regulation bound does not apply"
            )));
        }
        Ok((2.0 * self.d_bar1 * k + 2.0 * self.d_bar2) / self.c_bar)
    }

    /// `(2 d_bar1 K + 2 d_bar2) / c_bar` without the margin check.
    pub fn regulation_bound_unchecked(&self, k: f64) -> f64 {
        (2.0 * self.d_bar1 * k + 2.0 * self.d_bar2) / self.c_bar
    }
}

/// Observer error `e_j = (x_j - xhat_{j-1} - kappa_{j-1} y) / theta_star`,
/// `j = 2..n`.
pub fn observer_error(x: &[f64], xhat: &[f64], kappa: &[f64], theta_star: f64) -> Vec<f64> {
    let y = x[0];
    (1..x.len())
        .map(|j| (x[j] - xhat[j - 1] - kappa[j - 1] * y) / theta_star)
        .collect()
}

/// `V = e^T P e + (theta - thetahat)^2 / (2 mu) + sum z_j^2 / 2
///      + int_{t - tau(t)}^t e^{s - t} Qbar(y(s)) y(s) ds`.
///
/// `x` is the true plant state at `t`; `y_hist` is a one-dimensional output
/// history covering the delay window.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_lk_functional(
    ctrl: &AdaptiveController,
    consts: &StabilityConstants,
    x: &[f64],
    xhat: &[f64],
    theta_hat: f64,
    y_hist: &HistoryBuffer,
    t: f64,
    delay: &DelaySpec,
) -> Result<f64> {
    let obs = ctrl.observer();
    let e = observer_error(x, xhat, &obs.kappa, consts.theta_star);
    let m = e.len();
    let mut ep = 0.0;
    for i in 0..m {
        for j in 0..m {
            ep += e[i] * obs.p[(i, j)] * e[j];
        }
    }
    let tt = consts.theta - theta_hat;
    let out = ctrl.control(x[0], xhat, theta_hat)?;
    let zq: f64 = out.diagnostics.z.iter().map(|z| 0.5 * z * z).sum();
    let integral = y_hist.integrate_window(t - delay.tau(t), t, |s, y| (s - t).exp() * ctrl.q_bar(y[0]) * y[0])?;
    Ok(ep + tt * tt / (2.0 * ctrl.params().mu) + zq + integral)
}
