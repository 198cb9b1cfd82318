//! Delayed dynamics: delay specifications, trajectory history and the
//! fixed-step integrator.
//!
//! Accuracy contract: classical RK4 with linearly interpolated history. On
//! problems that never look up the history RK4 is fourth order; once delayed
//! values land between stored samples the interpolation caps the global order
//! at two.

mod comparison;
mod history;
mod integrate;
mod spec;

pub use comparison::comparison_bound;
pub use history::{HistoryBuffer, HistoryError};
pub use integrate::{
    explosion_monitor, integrate_path, Access, Controller, InitialFunction, IntegratorConfig, NoController,
    Observation, PathExit, PathResult, RddeSystem,
};
pub use spec::{DelaySpec, Trig};
