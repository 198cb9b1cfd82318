//! Adaptive output-feedback regulation: a reduced-order observer for the
//! unmeasured states, tuning-function backstepping with a single estimate
//! `thetahat` of the aggregate parameter, and the matching
//! Lyapunov–Krasovskii functional for analysis.

mod control;
mod functional;
mod observer;

pub use control::{adaptive_control, AdaptiveController, AdaptiveDesignParams, AdaptiveOutput, Diagnostics};
pub use functional::{adaptive_lk_functional, observer_error, stability_constants, StabilityConstants};
pub use observer::{design_observer, observer_matrix, observer_rhs, solve_lyapunov, ObserverConfig};
