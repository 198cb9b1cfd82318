//! Bounded-moment disturbance processes.
//!
//! The harmonic-product process is `a * cos(ell * t + U) * sin(ellbar * t)^p`
//! with a random phase `U ~ Uniform[0, 2pi)` drawn once per sample path. The
//! phase generator is ChaCha8 keyed by `(master seed, path, channel)`: the
//! master seed selects the key, the path index selects the stream and the
//! channel selects the word position, so any path of any ensemble can be
//! replayed on its own.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    HarmonicProduct {
        a: f64,
        ell: f64,
        ellbar: f64,
        #[serde(default = "default_p")]
        p: u32,
    },
    Constant {
        a: f64,
    },
    Zero,
}

fn default_p() -> u32 {
    1
}

impl NoiseSpec {
    pub fn harmonic(a: f64, ell: f64, ellbar: f64, p: u32) -> Self {
        NoiseSpec::HarmonicProduct { a, ell, ellbar, p }
    }

    /// Checks amplitudes and frequencies are finite and `p >= 1`.
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::HarmonicProduct { a, ell, ellbar, p } => {
                for (name, v) in [("noise.a", a), ("noise.ell", ell), ("noise.ellbar", ellbar)] {
                    if !v.is_finite() {
                        return Err(Error::param(name, format!("must be finite, got {v}")));
                    }
                }
                if p == 0 {
                    return Err(Error::param("noise.p", "sin exponent must be >= 1"));
                }
                Ok(())
            }
            NoiseSpec::Constant { a } if !a.is_finite() => {
                Err(Error::param("noise.a", format!("must be finite, got {a}")))
            }
            _ => Ok(()),
        }
    }

    /// Upper bound on `|sample(t)|`.
    pub fn amplitude(&self) -> f64 {
        match *self {
            NoiseSpec::HarmonicProduct { a, .. } | NoiseSpec::Constant { a } => a.abs(),
            NoiseSpec::Zero => 0.0,
        }
    }

    /// The same process with its amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            NoiseSpec::HarmonicProduct { a, ell, ellbar, p } => NoiseSpec::HarmonicProduct {
                a: a * factor,
                ell,
                ellbar,
                p,
            },
            NoiseSpec::Constant { a } => NoiseSpec::Constant { a: a * factor },
            NoiseSpec::Zero => NoiseSpec::Zero,
        }
    }
}

/// Phase of channel `channel` on path `path` of the ensemble keyed by `master`.
pub fn draw_phase(master: u64, path: u64, channel: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(path);
    // each phase consumes one 64-bit output, i.e. two 32-bit words
    rng.set_word_pos(2 * u128::from(channel));
    rng.random::<f64>() * TAU
}

/// One realisation of a disturbance channel. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProcess {
    spec: NoiseSpec,
    phase: f64,
}

impl NoiseProcess {
    /// Draws the phase from a single 64-bit seed (path 0, channel 0).
    pub fn new(spec: NoiseSpec, seed: u64) -> Self {
        Self::for_path(spec, seed, 0, 0)
    }

    pub fn for_path(spec: NoiseSpec, master: u64, path: u64, channel: u64) -> Self {
        let phase = draw_phase(master, path, channel);
        NoiseProcess { spec, phase }
    }

    pub fn with_phase(spec: NoiseSpec, phase: f64) -> Self {
        NoiseProcess { spec, phase }
    }

    pub fn zero() -> Self {
        NoiseProcess {
            spec: NoiseSpec::Zero,
            phase: 0.0,
        }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn sample(&self, t: f64) -> f64 {
        match self.spec {
            NoiseSpec::HarmonicProduct { a, ell, ellbar, p } => {
                a * (ell * t + self.phase).cos() * (ellbar * t).sin().powi(p as i32)
            }
            NoiseSpec::Constant { a } => a,
            NoiseSpec::Zero => 0.0,
        }
    }
}

/// Builds the per-channel processes of one ensemble path.
pub fn path_processes(specs: &[NoiseSpec], master: u64, path: u64) -> Vec<NoiseProcess> {
    specs
        .iter()
        .enumerate()
        .map(|(ch, s)| NoiseProcess::for_path(s.clone(), master, path, ch as u64))
        .collect()
}

/// `sup_t E|xi(t)|^r` of a scalar process, estimated over `grid` with
/// `n_paths` independent phases.
pub fn estimate_sup_moment(template: &NoiseSpec, r: f64, n_paths: usize, grid: &[f64], seed: u64) -> Result<f64> {
    estimate_sup_moment_vec(std::slice::from_ref(template), r, n_paths, grid, seed)
}

/// Vector version: the moment of the Euclidean norm `|xi(t)|` across channels.
pub fn estimate_sup_moment_vec(
    templates: &[NoiseSpec],
    r: f64,
    n_paths: usize,
    grid: &[f64],
    seed: u64,
) -> Result<f64> {
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be >= 1"));
    }
    if grid.is_empty() {
        return Err(Error::param("grid", "must be nonempty"));
    }
    let paths: Vec<Vec<NoiseProcess>> = (0..n_paths as u64)
        .map(|p| path_processes(templates, seed, p))
        .collect();
    let means: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&t| {
            let mut acc = 0.0;
            for procs in &paths {
                let mut sq = 0.0;
                for pr in procs {
                    let v = pr.sample(t);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteNoise { t, value: v });
                    }
                    sq += v * v;
                }
                acc += sq.sqrt().powf(r);
            }
            Ok(acc / n_paths as f64)
        })
        .collect();
    let mut sup = 0.0_f64;
    for m in means {
        sup = sup.max(m?);
    }
    Ok(sup)
}

/// A finite `r`-th moment bound `sup E|xi|^r < K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub order: f64,
    pub bound: f64,
}

impl MomentBound {
    pub fn new(order: f64, bound: f64) -> Result<Self> {
        if !(order >= 1.0) {
            return Err(Error::param("order", format!("must be >= 1, got {order}")));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::param("bound", format!("must be positive, got {bound}")));
        }
        Ok(MomentBound { order, bound })
    }
}

/// Both sides of `|sum chi_i|^l <= n^(l-1) * sum |chi_i|^l`.
pub fn sum_power_sides(chi: &[f64], l: f64) -> (f64, f64) {
    let n = chi.len() as f64;
    let lhs = chi.iter().sum::<f64>().abs().powf(l);
    let rhs = n.powf(l - 1.0) * chi.iter().map(|c| c.abs().powf(l)).sum::<f64>();
    (lhs, rhs)
}

/// Whether the power-mean inequality holds, up to the rounding of the two
/// floating-point evaluations (a few ulps relative to the right side).
pub fn sum_power_bound_holds(chi: &[f64], l: f64) -> bool {
    let (lhs, rhs) = sum_power_sides(chi, l);
    let slack = 8.0 * f64::EPSILON * (chi.len() as f64 + l) * rhs;
    lhs <= rhs + slack
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_samples() {
        let z = NoiseProcess::new(NoiseSpec::Zero, 3);
        assert_eq!(z.sample(1.7), 0.0);
        let h = NoiseProcess::with_phase(NoiseSpec::harmonic(1.0, 1.2, 1.5, 1), 0.0);
        assert_eq!(h.sample(0.0), 0.0);
        let h = NoiseProcess::with_phase(NoiseSpec::harmonic(1.0, 0.0, 1.5, 1), 0.0);
        assert!((h.sample(PI / 3.0) - 1.0).abs() < 1e-15);
        let c = NoiseProcess::new(NoiseSpec::Constant { a: -0.3 }, 0);
        assert_eq!(c.sample(10.0), -0.3);
    }

    #[test]
    fn squared_sine_exponent() {
        let h = NoiseProcess::with_phase(NoiseSpec::harmonic(2.0, 0.0, 1.0, 2), 0.0);
        let t = 0.4_f64;
        assert!((h.sample(t) - 2.0 * t.sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn phases_are_keyed_and_independent() {
        let a = draw_phase(42, 3, 1);
        assert_eq!(a, draw_phase(42, 3, 1));
        assert_ne!(a, draw_phase(42, 3, 0));
        assert_ne!(a, draw_phase(42, 4, 1));
        assert_ne!(a, draw_phase(43, 3, 1));
        assert!((0.0..TAU).contains(&a));
    }

    #[test]
    fn sup_moment_trivial_cases() {
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        assert_eq!(estimate_sup_moment(&NoiseSpec::Zero, 4.0, 10, &grid, 1).unwrap(), 0.0);
        let k = estimate_sup_moment(&NoiseSpec::Constant { a: 0.5 }, 4.0, 3, &grid, 1).unwrap();
        assert!((k - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn sup_moment_rejects_bad_input() {
        assert!(estimate_sup_moment(&NoiseSpec::Zero, 4.0, 0, &[0.0], 1).is_err());
        assert!(estimate_sup_moment(&NoiseSpec::Zero, 4.0, 1, &[], 1).is_err());
        let bad = NoiseSpec::Constant { a: f64::NAN };
        assert!(matches!(
            estimate_sup_moment(&bad, 4.0, 1, &[0.0], 1),
            Err(Error::NonFiniteNoise { .. })
        ));
    }

    #[test]
    fn moment_bound_validation() {
        assert!(MomentBound::new(4.0, 1.0).is_ok());
        assert!(MomentBound::new(0.5, 1.0).is_err());
        assert!(MomentBound::new(4.0, 0.0).is_err());
    }

    #[test]
    fn noise_spec_toml_round_trip() {
        let s: NoiseSpec = toml::from_str("kind = \"harmonic-product\"\na = 1.0\nell = 1.2\nellbar = 1.5\n").unwrap();
        assert_eq!(s, NoiseSpec::harmonic(1.0, 1.2, 1.5, 1));
        let z: NoiseSpec = toml::from_str("kind = \"zero\"").unwrap();
        assert_eq!(z, NoiseSpec::Zero);
    }
}
