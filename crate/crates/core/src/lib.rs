//! Simulation and regulation of random nonlinear systems with time-varying
//! state delay.
//!
//! The crate is organised bottom-up:
//!
//! - [`noise`]: bounded-moment harmonic disturbances with counter-based seeding.
//! - [`delay`]: delay specifications, sliding history windows and a fixed-step
//!   RK4 integrator for random delay differential equations.
//! - [`systems`]: the strict-feedback family and the two built-in benchmarks.
//! - [`gains`]: state-feedback backstepping gain synthesis and the matching
//!   Lyapunov–Krasovskii functional.
//! - [`adaptive`]: reduced-order observer, tuning-function adaptive
//!   backstepping and its Lyapunov functional.
//! - [`stability`]: Monte Carlo moment estimation and empirical
//!   noise-to-state stability checks.
//! - [`experiment`]: configuration, ensemble runs and artifact output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod delay;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod gains;
pub mod jet;
pub mod noise;
pub mod stability;
pub mod systems;

pub use error::{Error, Result};
