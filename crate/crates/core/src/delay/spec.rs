use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Sin,
    Cos,
}

/// A time-varying delay `tau(t)` with `0 <= tau(t) <= tau_max` and
/// `tau'(t) <= tau_star < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DelaySpec {
    Constant {
        tau: f64,
    },
    /// `offset + amplitude * trig(omega * t)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
        trig: Trig,
    },
    /// Piecewise-linear through `(times[i], values[i])`, held constant
    /// outside the table.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DelaySpec {
    pub fn constant(tau: f64) -> Self {
        DelaySpec::Constant { tau }
    }

    pub fn sinusoid(offset: f64, amplitude: f64, omega: f64, trig: Trig) -> Self {
        DelaySpec::Sinusoid {
            offset,
            amplitude,
            omega,
            trig,
        }
    }

    pub fn tau(&self, t: f64) -> f64 {
        match self {
            DelaySpec::Constant { tau } => *tau,
            DelaySpec::Sinusoid {
                offset,
                amplitude,
                omega,
                trig,
            } => {
                let arg = omega * t;
                let s = match trig {
                    Trig::Sin => arg.sin(),
                    Trig::Cos => arg.cos(),
                };
                // rounding can push the minimum a hair below zero
                (offset + amplitude * s).max(0.0)
            }
            DelaySpec::Tabulated { times, values } => {
                let i = times.partition_point(|&s| s <= t);
                if i == 0 {
                    values[0]
                } else if i == times.len() {
                    values[values.len() - 1]
                } else {
                    let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                    values[i - 1] + w * (values[i] - values[i - 1])
                }
            }
        }
    }

    /// The paper's `tau`: an upper bound on `tau(t)`.
    pub fn tau_max(&self) -> f64 {
        match self {
            DelaySpec::Constant { tau } => *tau,
            DelaySpec::Sinusoid { offset, amplitude, .. } => offset + amplitude.abs(),
            DelaySpec::Tabulated { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Upper bound on the derivative `tau'(t)`, clipped below at zero.
    pub fn tau_star(&self) -> f64 {
        match self {
            DelaySpec::Constant { .. } => 0.0,
            DelaySpec::Sinusoid { amplitude, omega, .. } => (amplitude * omega).abs(),
            DelaySpec::Tabulated { times, values } => times
                .windows(2)
                .zip(values.windows(2))
                .map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0]))
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DelaySpec::Constant { tau } => {
                if !(tau.is_finite() && *tau >= 0.0) {
                    return Err(Error::InvalidDelay(format!("constant delay {tau} must be >= 0")));
                }
            }
            DelaySpec::Sinusoid {
                offset,
                amplitude,
                omega,
                ..
            } => {
                if ![offset, amplitude, omega].iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidDelay("non-finite sinusoid parameter".into()));
                }
                if *offset < amplitude.abs() {
                    return Err(Error::InvalidDelay(format!(
                        "offset {offset} < |amplitude| {}: delay would go negative",
                        amplitude.abs()
                    )));
                }
            }
            DelaySpec::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidDelay(
                        "tabulated delay needs equal-length nonempty tables".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidDelay(
                        "tabulated times must be strictly increasing".into(),
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidDelay("tabulated values must be >= 0".into()));
                }
            }
        }
        let ts = self.tau_star();
        if ts >= 1.0 {
            return Err(Error::InvalidDelay(format!("delay derivative bound {ts} must be < 1")));
        }
        Ok(())
    }
}
