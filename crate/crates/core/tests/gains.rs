use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdde::delay::{DelaySpec, HistoryBuffer, InitialFunction, IntegratorConfig, Trig};
use rdde::gains::{
    lk_functional, sandwich_factor, state_feedback_u, synthesize_gains, z_transform, GainParams,
    StateFeedbackController,
};
use rdde::noise::{path_processes, NoiseSpec};
use rdde::stability::{exp_window_integrals, state_feedback_lk_series};
use rdde::systems::example1_reactor;

// tau in [0, 0.2], |tau'| <= 0.1
fn oracle_delay() -> DelaySpec {
    DelaySpec::sinusoid(0.1, 0.1, 1.0, Trig::Sin)
}

/// Level-by-level evaluation for `n = 2`, `theta_bar = 1`, unit weights,
/// written out longhand.
fn longhand_n2(tau: f64, tau_star: f64) -> [f64; 6] {
    let e = tau.exp();
    let r = 1.0 / (1.0 - tau_star);
    let omega1 = 1.0 + e * r / 2.0;
    let lambda1 = 0.5 + e * r / 8.0 + 1.0 / 16.0;
    let beta1 = 4.0 + omega1 + lambda1 + 0.5;
    // eta = max(theta, xi, xi theta) = beta1, zeta = beta1 / 2
    let eta_bar = 2.0 * beta1;
    let eta_tilde = eta_bar * (1.0 + beta1);
    let zeta_bar = beta1;
    let zeta_tilde = zeta_bar * (1.0 + beta1);
    let omega2 = eta_tilde * eta_tilde * (0.5 + e * r / 2.0) + eta_bar + e * r * eta_bar * eta_bar / 2.0;
    let lambda2 = zeta_tilde * zeta_tilde * (0.5 + e * r / 2.0)
        + zeta_bar
        + e * r * zeta_bar * zeta_bar / 2.0
        + 1.0 / 16.0
        + beta1 * beta1 / 16.0;
    let beta2 = 3.0 + omega2 + lambda2;
    [omega1, lambda1, beta1, omega2, lambda2, beta2]
}

#[test]
fn gains_match_longhand_and_scripted_values() {
    let d = oracle_delay();
    assert_relative_eq!(d.tau_max(), 0.2, max_relative = 1e-15);
    assert_relative_eq!(d.tau_star(), 0.1, max_relative = 1e-15);
    let g = synthesize_gains(1.0, 2, &d, &GainParams::ones(2)).unwrap();
    let o = longhand_n2(0.2, 0.1);
    let got = [g.omega[0], g.lambda[0], g.beta[0], g.omega[1], g.lambda[1], g.beta[1]];
    for (a, b) in got.iter().zip(o) {
        assert_relative_eq!(*a, b, max_relative = 1e-12);
    }
    // frozen from a separate script
    let scripted = [
        1.678557087866761,
        0.7321392719666903,
        6.910696359833451,
        14232.560287185153,
        3564.6427777373183,
        17800.203064922473,
    ];
    for (a, b) in got.iter().zip(scripted) {
        assert_relative_eq!(*a, b, max_relative = 1e-9);
    }
    assert_eq!(g.pi_tilde, 2.0);
}

#[test]
fn example1_reactor_uses_the_same_delay_constants() {
    let sys = example1_reactor();
    let g = synthesize_gains(sys.theta_bar(), 2, sys.delay_spec(), &GainParams::ones(2)).unwrap();
    assert_relative_eq!(g.beta[1], 17800.203064922473, max_relative = 1e-9);
}

#[test]
fn linear_feedback_equals_last_coordinate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = synthesize_gains(1.0, 2, &oracle_delay(), &GainParams::ones(2)).unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
        let z = z_transform(&x, &g.beta);
        let lhs = state_feedback_u(&x, &g.beta);
        let rhs = -g.beta[1] * z[1];
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-12);
    }
    for n in 1..=5 {
        let beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..20.0)).collect();
        for _ in 0..200 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z = z_transform(&x, &beta);
            let u = state_feedback_u(&x, &beta);
            assert_relative_eq!(u, -beta[n - 1] * z[n - 1], max_relative = 1e-12, epsilon = 1e-9);
        }
    }
}

#[test]
fn running_window_integrals_match_direct_quadrature() {
    let h = 1e-3;
    let delay = DelaySpec::sinusoid(0.1, -0.1, 1.0, Trig::Sin);
    let times: Vec<f64> = (0..=3000).map(|k| -0.2 + k as f64 * h).collect();
    let w: Vec<f64> = times.iter().map(|t| 2.0 + (3.0 * t).sin()).collect();
    let start = 200;
    let fast = exp_window_integrals(&times, &w, start, &delay).unwrap();
    let mut hist = HistoryBuffer::new(1, f64::INFINITY);
    for (t, v) in times.iter().zip(&w) {
        hist.push(*t, &[*v]).unwrap();
    }
    for (k, f) in fast.iter().enumerate() {
        let t = times[start + k];
        let direct = hist
            .integrate_window(t - delay.tau(t), t, |s, v| (s - t).exp() * v[0])
            .unwrap();
        assert!((f - direct).abs() < 1e-9, "t={t}: {f} vs {direct}");
    }
}

#[test]
fn functional_series_agrees_with_direct_evaluation_and_sandwich() {
    let sys = example1_reactor();
    let delay = sys.delay_spec().clone();
    let g = synthesize_gains(1.0, 2, &delay, &GainParams::ones(2)).unwrap();
    let noise = [
        NoiseSpec::harmonic(1.0, 1.2, 1.5, 1),
        NoiseSpec::harmonic(1.0, 0.8, 1.0, 2),
    ];
    let init = InitialFunction::constant([0.5, -0.5]);
    let cfg = IntegratorConfig::new(0.0, 2.0, 1e-3).with_substeps(10);
    let procs = path_processes(&noise, 42, 0);
    let ctrl = StateFeedbackController::new(&g);
    let path = rdde::delay::integrate_path(&sys, &ctrl, &procs, &init, &cfg).unwrap();
    let series = state_feedback_lk_series(&path, &g.beta, &delay, &init).unwrap();

    // z history including the constant pre-history
    let mut zh = HistoryBuffer::new(2, f64::INFINITY);
    let z0 = z_transform(&[0.5, -0.5], &g.beta);
    for k in (1..=200).rev() {
        zh.push(-(k as f64) * 1e-3, &z0).unwrap();
    }
    for k in 0..path.len() {
        zh.push(path.times[k], &z_transform(path.state(k), &g.beta)).unwrap();
    }
    let factor = sandwich_factor(2, delay.tau_max());
    for k in (0..path.len()).step_by(50) {
        let direct = lk_functional(&zh, path.times[k], &delay).unwrap();
        assert_relative_eq!(series.v[k], direct, max_relative = 1e-6, epsilon = 1e-12);
        assert!(series.lower[k] <= series.v[k] + 1e-6);
        assert!(series.v[k] <= series.upper[k] + 1e-6);
        assert!(series.upper[k] >= factor * 2.0 * series.lower[k] - 1e-9);
    }
}
