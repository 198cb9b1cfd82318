#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdde::adaptive::{design_observer, AdaptiveController, AdaptiveDesignParams};
use rdde::delay::{
    integrate_path, DelaySpec, InitialFunction, IntegratorConfig, NoController, PathExit, RddeSystem, Trig,
};
use rdde::noise::NoiseProcess;
use rdde::systems::{example2_system, Envelopes};

/// `x' = a x + b x(t - tau) + xi`.
pub struct Linear {
    pub a: f64,
    pub b: f64,
    pub delay: DelaySpec,
    pub noisy: bool,
}

impl RddeSystem for Linear {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        usize::from(self.noisy)
    }
    fn delay(&self) -> &DelaySpec {
        &self.delay
    }
    fn drift(&self, _t: f64, xd: &[f64], x: &[f64], _u: f64, out: &mut [f64]) {
        out[0] = self.a * x[0] + self.b * xd[0];
    }
    fn diffusion(&self, _t: f64, _xd: &[f64], _x: &[f64], out: &mut [f64]) {
        if self.noisy {
            out[0] = 1.0;
        }
    }
}

pub fn final_value(sys: &Linear, noise: &[NoiseProcess], horizon: f64, h: f64, substeps: usize) -> f64 {
    let cfg = IntegratorConfig::new(0.0, horizon, h).with_substeps(substeps);
    let p = integrate_path(sys, &NoController, noise, &InitialFunction::constant([1.0]), &cfg).unwrap();
    assert_eq!(p.exit, PathExit::Completed);
    *p.states.last().unwrap()
}

pub fn richardson_order(v: [f64; 3]) -> f64 {
    ((v[0] - v[1]) / (v[1] - v[2])).abs().log2()
}

pub const STEPS: [f64; 3] = [0.1, 0.05, 0.025];

/// Observed orders of `x' = -x` (to `T = 1`) and `x' = -x(t - 1)`, `phi = 1`
/// (to `T = 3`) over [`STEPS`].
pub fn observed_orders() -> (f64, f64) {
    let ode = Linear {
        a: -1.0,
        b: 0.0,
        delay: DelaySpec::constant(0.0),
        noisy: false,
    };
    let dde = Linear {
        a: 0.0,
        b: -1.0,
        delay: DelaySpec::constant(1.0),
        noisy: false,
    };
    (
        richardson_order(STEPS.map(|h| final_value(&ode, &[], 1.0, h, 1))),
        richardson_order(STEPS.map(|h| final_value(&dde, &[], 3.0, h, 1))),
    )
}

pub fn example2_controller() -> AdaptiveController {
    let spec = example2_system();
    let obs = design_observer(2, &[1.0], 2.0).unwrap();
    AdaptiveController::new(
        spec.envelopes.clone(),
        spec.plant.delay_spec(),
        AdaptiveDesignParams::example2(),
        obs,
        &[0.1],
        -0.5,
    )
    .unwrap()
}

/// Hand expansion of the second-order law for the benchmark envelopes
/// `phibar = (0, 1)`, `psibar = (1, 0)`, `phibar_tau = (y, 0)`,
/// `psibar_tau = (0, 1)` and `P = b / (2 kappa1)`.
pub fn closed_form_n2(p: &AdaptiveDesignParams, kappa1: f64, b: f64, rho: f64, y: f64, x1: f64, th: f64) -> (f64, f64) {
    let pf = b / (2.0 * kappa1);
    let (pf2, pf4) = (pf * pf, pf.powi(4));
    let (d11, d12, d13) = (p.dk1[0], p.dk2[0], p.dk3[0]);
    let (d21, d22, d23) = (p.dk1[1], p.dk2[1], p.dk3[1]);
    let mu = p.mu;

    let lin = p.c[0] + kappa1 + 4.0 * pf2 / p.d01;
    let cubic = 4.0 * pf4 * kappa1.powi(4) / p.d02
        + 1.0 / d13
        + 1.0 / d23
        + rho * (4.0 * pf2 * kappa1 * kappa1 / p.d01 + 2.0 * (d12 + d22) + 4.0 * pf4 / p.d02);
    let a1 = 2.0 / d11 + 2.0 / d12;
    let varpi1 = a1 * y + y.powi(3) / d13;
    let alpha1 = -lin * y - cubic * y.powi(3) - varpi1 * th / 8.0;
    let da_dy = -lin - 3.0 * cubic * y * y - th * (a1 + 3.0 * y * y / d13) / 8.0;
    let da_dth = -varpi1 / 8.0;

    let z2 = x1 - alpha1;
    let beta2 = -(kappa1 + da_dy) * (x1 + kappa1 * y);
    let varpi2 = (2.0 / d21 + 2.0 / d22) * z2 * da_dy * da_dy + z2.powi(3) * da_dy.powi(4) / d23;
    let lambda1 = varpi1 * y / 8.0 - th / mu;
    let lambda2 = lambda1 + z2 * varpi2 / 8.0;
    let u = -p.c[1] * z2 - y - beta2 + mu * da_dth * lambda2 - varpi2 * th / 8.0;
    (u, mu * lambda2)
}

pub fn point(ctrl: &AdaptiveController, v: &[f64]) -> Vec<f64> {
    let n = ctrl.order();
    ctrl.control(v[0], &v[1..n], v[n]).unwrap().diagnostics.alpha
}

/// Ridders-extrapolated central differences of every `alpha_k` in variable
/// `var`.
pub fn fd(ctrl: &AdaptiveController, v: &[f64], var: usize) -> Vec<f64> {
    const CON: f64 = 1.4;
    const STEPS: usize = 10;
    let central = |h: f64| {
        let at = |s: f64| {
            let mut w = v.to_vec();
            w[var] += s * h;
            point(ctrl, &w)
        };
        let (p, m) = (at(1.0), at(-1.0));
        (0..p.len()).map(|k| (p[k] - m[k]) / (2.0 * h)).collect::<Vec<f64>>()
    };
    let n = point(ctrl, v).len();
    (0..n)
        .map(|k| {
            let mut h = 0.1 * v[var].abs().max(1.0);
            let mut tab = vec![vec![0.0; STEPS]; STEPS];
            tab[0][0] = central(h)[k];
            let (mut best, mut err) = (tab[0][0], f64::INFINITY);
            for i in 1..STEPS {
                h /= CON;
                tab[0][i] = central(h)[k];
                let mut fac = CON * CON;
                for j in 1..=i {
                    tab[j][i] = (tab[j - 1][i] * fac - tab[j - 1][i - 1]) / (fac - 1.0);
                    fac *= CON * CON;
                    let e = (tab[j][i] - tab[j - 1][i])
                        .abs()
                        .max((tab[j][i] - tab[j - 1][i - 1]).abs());
                    if e <= err {
                        err = e;
                        best = tab[j][i];
                    }
                }
                if (tab[i][i] - tab[i - 1][i - 1]).abs() >= 2.0 * err {
                    break;
                }
            }
            best
        })
        .collect()
}

/// Largest relative gap between the propagated partials and finite
/// differences over `points` random evaluation points in `[-1, 1]`.
pub fn worst_partial_error(ctrl: &AdaptiveController, points: usize, seed: u64) -> f64 {
    let n = ctrl.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let v: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = ctrl.control(v[0], &v[1..n], v[n]).unwrap().diagnostics;
        let fy = fd(ctrl, &v, 0);
        let fth = fd(ctrl, &v, n);
        let fx: Vec<Vec<f64>> = (1..n).map(|j| fd(ctrl, &v, j)).collect();
        for k in 0..n - 1 {
            let mut pairs = vec![(d.d_alpha_dy[k], fy[k]), (d.d_alpha_dtheta[k], fth[k])];
            for (j, fxj) in fx.iter().enumerate().take(k) {
                pairs.push((d.d_alpha_dxhat[k][j], fxj[k]));
            }
            // alpha_k does not depend on xhat_k..xhat_{n-1}
            for fxj in fx.iter().skip(k) {
                assert!(fxj[k].abs() <= 1e-9 * (1.0 + d.alpha[k].abs()));
            }
            for (ad, num) in pairs {
                let rel = (ad - num).abs() / ad.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

pub fn third_order_controller() -> AdaptiveController {
    let s = |v: [&str; 3]| v.map(String::from).to_vec();
    let env = Envelopes::parse(
        &s(["0.5", "0.3 * y", "0.2"]),
        &s(["0.3", "0.5", "0"]),
        &s(["0.5 * y", "0", "0.2"]),
        &s(["0", "0.4", "0.2 * y"]),
    )
    .unwrap();
    let params = AdaptiveDesignParams {
        mu: 0.7,
        c: vec![1.0, 2.0, 1.5],
        d01: 1.0,
        d02: 4.0,
        dk1: vec![1.0, 0.5, 1.0],
        dk2: vec![1.0, 1.0, 2.0],
        dk3: vec![4.0, 5.0, 8.0],
    };
    let obs = design_observer(3, &[3.0, 2.0], 2.0).unwrap();
    AdaptiveController::new(
        env,
        &DelaySpec::sinusoid(0.05, 0.05, 1.0, Trig::Sin),
        params,
        obs,
        &[0.0, 0.0],
        0.0,
    )
    .unwrap()
}

/// Largest relative gap between the closed form and the recursion for `u`
/// and `thetahat'` at `points` random states.
pub fn worst_closed_form_error(points: usize, seed: u64) -> f64 {
    let ctrl = example2_controller();
    let p = AdaptiveDesignParams::example2();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let y = rng.random_range(-1.5..1.5);
        let x1 = rng.random_range(-2.0..2.0);
        let th = rng.random_range(-2.0..2.0);
        let out = ctrl.control(y, &[x1], th).unwrap();
        let (u, thd) = closed_form_n2(&p, 1.0, 2.0, ctrl.rho(), y, x1, th);
        worst = worst
            .max((out.u - u).abs() / u.abs())
            .max((out.theta_hat_dot - thd).abs() / thd.abs());
    }
    worst
}
