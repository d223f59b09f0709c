//! Dense kernels: Lyapunov solves, stability tests and eigenvalue routines.

mod eigen;
mod lanczos;
mod lyapunov;

pub use eigen::{balance, dense_sym_eig, spectral_abscissa, spectral_norm, sym_max_eig, sym_min_eig, STABILITY_MARGIN};
pub use lanczos::{lanczos_cap, min_eig_estimate, EigenEstimate, LinearOperator};
pub use lyapunov::{residual_stats, solve_lyapunov, solve_lyapunov_dual, LyapunovSolver, ResidualStats};

use crate::Matrix;
use nalgebra::DVector;

/// Column-major `vec` of a matrix.
pub fn vec(m: &Matrix) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Matrix {
    Matrix::from_column_slice(rows, cols, v.as_slice())
}
