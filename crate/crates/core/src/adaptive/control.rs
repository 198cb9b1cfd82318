use serde::{Deserialize, Serialize};

use super::observer::{observer_rhs, ObserverConfig};
use crate::delay::{Access, Controller, DelaySpec, Observation};
use crate::error::{Error, Result};
use crate::jet::{Jet, JetBasis, Real};
use crate::systems::{EnvelopeKind, Envelopes};

/// Design constants of the adaptive output-feedback law. Vectors are indexed
/// by zero-based level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveDesignParams {
    pub mu: f64,
    pub c: Vec<f64>,
    pub d01: f64,
    pub d02: f64,
    pub dk1: Vec<f64>,
    pub dk2: Vec<f64>,
    pub dk3: Vec<f64>,
}

impl AdaptiveDesignParams {
    /// The constants used for the second benchmark.
    pub fn example2() -> Self {
        AdaptiveDesignParams {
            mu: 1.0,
            c: vec![1.0, 1.0],
            d01: 1.0,
            d02: 0.1,
            dk1: vec![1.0, 1.0],
            dk2: vec![1.0, 1.0],
            dk3: vec![0.1, 0.1],
        }
    }

    pub fn order(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("d01", self.d01), ("d02", self.d02)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("c", &self.c),
            ("dk1", &self.dk1),
            ("dk2", &self.dk2),
            ("dk3", &self.dk3),
        ] {
            if v.len() != n {
                return Err(Error::param(name, format!("expected {n} entries, got {}", v.len())));
            }
            if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::param(name, format!("entries must be > 0, got {x}")));
            }
        }
        Ok(())
    }

    /// `b_0 = b - d01 - 1`, `b_k = b_{k-1} - d_k1`; returns `b_0..b_n`.
    pub fn margins(&self, b: f64) -> Vec<f64> {
        let mut out = vec![b - self.d01 - 1.0];
        for d in &self.dk1 {
            let last = *out.last().unwrap();
            out.push(last - d);
        }
        out
    }
}

/// Per-step intermediate values of one controller evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `z_1..z_n`.
    pub z: Vec<f64>,
    /// `lambda_1..lambda_n`.
    pub lambda: Vec<f64>,
    /// `alpha_1..alpha_n`; the last entry is `u`.
    pub alpha: Vec<f64>,
    /// `varpi_1..varpi_n`.
    pub varpi: Vec<f64>,
    /// `betabar_2..betabar_n`.
    pub beta_bar: Vec<f64>,
    /// `d alpha_k / d y` for `k = 1..n-1`.
    pub d_alpha_dy: Vec<f64>,
    /// `d alpha_k / d xhat_j`, `j = 1..k-1`, for `k = 1..n-1`.
    pub d_alpha_dxhat: Vec<Vec<f64>>,
    /// `d alpha_k / d thetahat` for `k = 1..n-1`.
    pub d_alpha_dtheta: Vec<f64>,
    pub omega: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveOutput {
    pub u: f64,
    pub theta_hat_dot: f64,
    pub diagnostics: Diagnostics,
}

/// The adaptive output-feedback controller with its observer. Its internal
/// state is `(xhat_1..xhat_{n-1}, thetahat)`; it only ever sees `y`.
#[derive(Debug, Clone)]
pub struct AdaptiveController {
    n: usize,
    envelopes: Envelopes,
    params: AdaptiveDesignParams,
    observer: ObserverConfig,
    /// `e^tau / (1 - tau*)`.
    rho: f64,
    basis: JetBasis,
    initial: Vec<f64>,
}

impl AdaptiveController {
    /// `xhat0` has `n - 1` entries. The margins `b_k` are not checked here;
    /// they only enter the closed-loop bound (see
    /// [`super::StabilityConstants::regulation_bound`]).
    pub fn new(
        envelopes: Envelopes,
        delay: &DelaySpec,
        params: AdaptiveDesignParams,
        observer: ObserverConfig,
        xhat0: &[f64],
        theta_hat0: f64,
    ) -> Result<Self> {
        let n = envelopes.order();
        if n < 2 {
            return Err(Error::param("system", "output feedback needs order >= 2"));
        }
        params.validate(n)?;
        if observer.kappa.len() != n - 1 {
            return Err(Error::param(
                "kappa",
                format!("expected {} gain(s), got {}", n - 1, observer.kappa.len()),
            ));
        }
        if xhat0.len() != n - 1 {
            return Err(Error::param(
                "xhat0",
                format!("expected {} entries, got {}", n - 1, xhat0.len()),
            ));
        }
        let tau_star = delay.tau_star();
        if !(tau_star < 1.0) {
            return Err(Error::InvalidDelay(format!(
                "delay derivative bound {tau_star} must be < 1"
            )));
        }
        let rho = delay.tau_max().exp() / (1.0 - tau_star);
        let mut initial = xhat0.to_vec();
        initial.push(theta_hat0);
        Ok(AdaptiveController {
            n,
            envelopes,
            params,
            observer,
            rho,
            basis: JetBasis::new(n + 1, n - 1),
            initial,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &AdaptiveDesignParams {
        &self.params
    }

    pub fn observer(&self) -> &ObserverConfig {
        &self.observer
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `kappa_i` for one-based `i`, zero outside `1..n-1`.
    fn kappa(&self, i: usize) -> f64 {
        if (1..self.n).contains(&i) {
            self.observer.kappa[i - 1]
        } else {
            0.0
        }
    }

    /// `(omega(y), sigma(y), Qbar(y))`.
    pub fn envelope_terms<R: Real>(&self, y: &R) -> (R, R, R) {
        let n = self.n;
        let p = &self.params;
        let env = &self.envelopes;
        let pf2 = self.observer.p_frobenius.powi(2);
        let pf4 = pf2 * pf2;
        let ev = |kind: EnvelopeKind| -> Vec<R> { (0..n).map(|i| env.eval(kind, i, y)).collect() };
        let (phi, psi, phit, psit) = (
            ev(EnvelopeKind::Phi),
            ev(EnvelopeKind::Psi),
            ev(EnvelopeKind::PhiTau),
            ev(EnvelopeKind::PsiTau),
        );
        let sq = |r: &R| r.clone() * r.clone();
        let zero = y.lift(0.0);
        let (mut s_phi, mut s_psi, mut s_phit, mut s_psit) = (zero.clone(), zero.clone(), zero.clone(), zero.clone());
        for i in 1..n {
            let k = self.kappa(i);
            s_phi = s_phi + sq(&phi[i]) + sq(&phi[0]) * (k * k);
            s_psi = s_psi + psi[i].powi(4) + psi[0].powi(4) * k.powi(4);
            s_phit = s_phit + sq(&phit[i]) + sq(&phit[0]) * (k * k);
            s_psit = s_psit + psit[i].powi(4) + psit[0].powi(4) * k.powi(4);
        }
        let y2 = sq(y);
        let y3 = y2.clone() * y.clone();
        let nm1 = (n - 1) as f64;

        let omega = s_phi * (4.0 * pf2 / p.d01) * y.clone()
            + s_psi * (4.0 * nm1 * pf4 / p.d02) * y3.clone()
            + sq(&phi[0]) * (2.0 * p.dk2[0]) * y.clone()
            + psi[0].powi(4) * y3.clone() * (1.0 / p.d13());

        let sum_d2: f64 = p.dk2.iter().sum();
        let sum_inv_d3: f64 = p.dk3.iter().map(|d| 1.0 / d).sum();
        let q_bar = (s_phit * (4.0 * pf2 / p.d01) * y.clone()
            + (sq(&phit[0]) * (2.0 * sum_d2) + psit[0].powi(4) * y2.clone() * sum_inv_d3) * y.clone()
            + s_psit * (4.0 * nm1 * pf4 / p.d02) * y3)
            * self.rho;

        let tail_d2: f64 = p.dk2[1..].iter().sum();
        let tail_inv_d3: f64 = p.dk3[1..].iter().map(|d| 1.0 / d).sum();
        let sigma = q_bar.clone() + (sq(&phi[0]) * (2.0 * tail_d2) + psi[0].powi(4) * y2 * tail_inv_d3) * y.clone();
        (omega, sigma, q_bar)
    }

    /// `Qbar(y)`, the delay-compensation density `Q(y) = Qbar(y) y`.
    pub fn q_bar(&self, y: f64) -> f64 {
        self.envelope_terms(&y).2
    }

    /// Runs the backstepping recursion at `(y, xhat, thetahat)`, propagating
    /// truncated Taylor jets in `(y, xhat_1..xhat_{n-1}, thetahat)` so every
    /// partial of `alpha_k` that a later step needs is available.
    pub fn control(&self, y: f64, xhat: &[f64], theta_hat: f64) -> Result<AdaptiveOutput> {
        let n = self.n;
        let b = &self.basis;
        let p = &self.params;
        let mu = p.mu;
        let yj = b.variable(0, y);
        let xh: Vec<Jet<'_>> = (0..n - 1).map(|j| b.variable(1 + j, xhat[j])).collect();
        let th = b.variable(n, theta_hat);
        fn sq<'b>(j: &Jet<'b>) -> Jet<'b> {
            j.clone() * j.clone()
        }

        let (omega, sigma, _) = self.envelope_terms(&yj);
        let z1 = yj.clone();
        let varpi1 = z1.clone() * (2.0 / p.dk1[0] + 2.0 / p.dk2[0]) + z1.powi(3) * (1.0 / p.d13());
        let lambda1 = varpi1.clone() * z1.clone() * 0.125 - th.clone() * (1.0 / mu);
        let alpha1 = -(z1.clone() * p.c[0])
            - yj.clone() * self.kappa(1)
            - omega.clone()
            - varpi1.clone() * th.clone() * 0.125
            - sigma.clone();

        let mut diag = Diagnostics {
            z: vec![z1.value()],
            lambda: vec![lambda1.value()],
            alpha: vec![alpha1.value()],
            varpi: vec![varpi1.value()],
            beta_bar: Vec::with_capacity(n - 1),
            d_alpha_dy: Vec::with_capacity(n - 1),
            d_alpha_dxhat: Vec::with_capacity(n - 1),
            d_alpha_dtheta: Vec::with_capacity(n - 1),
            omega: omega.value(),
            sigma: sigma.value(),
        };

        let mut zs = vec![z1];
        let mut dths: Vec<Jet<'_>> = Vec::with_capacity(n - 1);
        let mut alpha = alpha1;
        let mut lambda = lambda1;
        let o1 = xh[0].clone() + yj.clone() * self.kappa(1);

        for k in 2..=n {
            // partials of alpha_{k-1}, which depends on y, xhat_1..xhat_{k-2}, thetahat
            let dy = alpha.partial(0);
            let dth = alpha.partial(n);
            let dx: Vec<Jet<'_>> = (1..=k - 2).map(|j| alpha.partial(j)).collect();
            diag.d_alpha_dy.push(dy.value());
            diag.d_alpha_dtheta.push(dth.value());
            diag.d_alpha_dxhat.push(dx.iter().map(Real::value).collect());

            let zk = xh[k - 2].clone() - alpha.clone();
            let mut beta_bar = yj.clone() * self.kappa(k) - (dy.clone() + self.kappa(k - 1)) * o1.clone();
            for (jm1, dxj) in dx.iter().enumerate() {
                let j = jm1 + 1;
                let inner = xh[j].clone() + yj.clone() * self.kappa(j + 1) - o1.clone() * self.kappa(j);
                beta_bar = beta_bar - dxj.clone() * inner;
            }
            let dy2 = sq(&dy);
            let varpi = zk.clone() * dy2.clone() * (2.0 / p.dk1[k - 1] + 2.0 / p.dk2[k - 1])
                + zk.powi(3) * sq(&dy2) * (1.0 / p.dk3[k - 1]);
            lambda = lambda + zk.clone() * varpi.clone() * 0.125;
            dths.push(dth.clone());
            let mut s = b.constant(0.0);
            for j in 2..k {
                s = s + zs[j - 1].clone() * dths[j - 2].clone();
            }
            let next = -(zk.clone() * p.c[k - 1]) - zs[k - 2].clone() - beta_bar.clone() + dth * lambda.clone() * mu
                - varpi.clone() * th.clone() * 0.125
                + varpi.clone() * s * (mu * 0.125);

            diag.z.push(zk.value());
            diag.lambda.push(lambda.value());
            diag.alpha.push(next.value());
            diag.varpi.push(varpi.value());
            diag.beta_bar.push(beta_bar.value());
            zs.push(zk);
            alpha = next;
        }

        let u = alpha.value();
        let theta_hat_dot = mu * lambda.value();
        if !u.is_finite() || !theta_hat_dot.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite adaptive control at y={y}, xhat={xhat:?}, thetahat={theta_hat}"
            )));
        }
        Ok(AdaptiveOutput {
            u,
            theta_hat_dot,
            diagnostics: diag,
        })
    }
}

impl AdaptiveDesignParams {
    fn d13(&self) -> f64 {
        self.dk3[0]
    }
}

/// Free-function form of [`AdaptiveController::control`].
pub fn adaptive_control(ctrl: &AdaptiveController, y: f64, xhat: &[f64], theta_hat: f64) -> Result<AdaptiveOutput> {
    ctrl.control(y, xhat, theta_hat)
}

impl Controller for AdaptiveController {
    fn access(&self) -> Access {
        Access::Output
    }

    fn internal_dim(&self) -> usize {
        self.n
    }

    fn initial_internal(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn evaluate(&self, _t: f64, obs: Observation<'_>, internal: &[f64], d_internal: &mut [f64]) -> Result<f64> {
        let y = obs.output();
        let (xhat, th) = internal.split_at(self.n - 1);
        let out = self.control(y, xhat, th[0])?;
        observer_rhs(&self.observer.kappa, xhat, y, out.u, &mut d_internal[..self.n - 1]);
        d_internal[self.n - 1] = out.theta_hat_dot;
        Ok(out.u)
    }
}
