//! State-feedback solvers: gradient descent, the restarted momentum scheme and its continuous-time flow.

mod accel;
mod flow;
mod gd;

pub use accel::{accel_solve, accel_solve_from, max_step_bound, AccelConfig, SolverState};
pub use flow::simulate_hybrid_flow;
pub use gd::{gd_solve, GdConfig};
