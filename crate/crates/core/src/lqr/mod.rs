//! The LQR objective, its derivatives and certified constants.

mod constants;
mod oracle;
mod problem;
mod riccati;

pub use constants::{constants, ConstantsBundle};
pub use oracle::{
    assemble_dense_hessian, closed_loop, cost, cost_and_gradient, default_gradient_step, default_hvp_step, gradient,
    hessian_quadratic_form, hvp_exact, hvp_fd, is_stabilizing, Evaluation, HessianForm,
};
pub use problem::{fmt_f64, matrix_to_json, matrix_to_rows, rows_to_matrix, Gain, Kind, LqrProblem, MIN_WEIGHT_EIG};
pub use riccati::{care_oracle, care_solve, CareSolution, KLEINMAN_MAX_ITERS};
