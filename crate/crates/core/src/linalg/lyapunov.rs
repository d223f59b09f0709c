//! Continuous Lyapunov equations through Kronecker vectorization.
//!
//! `Aᵀ X + X A + W = 0` becomes `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) = -vec(W)` with the
//! column-major `vec`. The dual equation `A Y + Y Aᵀ + W = 0` is the transpose
//! of the same linear system, so one LU factorization serves both.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use super::eigen::{spectral_abscissa, STABILITY_MARGIN};
use crate::{Error, Matrix, Result};

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 3;

static SOLVES: AtomicU64 = AtomicU64::new(0);
static REJECTED: AtomicU64 = AtomicU64::new(0);
// bit pattern of a non-negative f64; integer order matches float order
static WORST_RATIO: AtomicU64 = AtomicU64::new(0);

/// Process-wide record of Lyapunov residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    /// Solves that met the tolerance.
    pub solves: u64,
    /// Solves abandoned because the residual stayed above tolerance.
    pub rejected: u64,
    /// Largest `‖residual‖_F / (1e-10·(1 + ‖W‖_F))` among accepted solves.
    pub worst_ratio: f64,
}

pub fn residual_stats() -> ResidualStats {
    ResidualStats {
        solves: SOLVES.load(Ordering::Relaxed),
        rejected: REJECTED.load(Ordering::Relaxed),
        worst_ratio: f64::from_bits(WORST_RATIO.load(Ordering::Relaxed)),
    }
}

/// LU factorization of the vectorized Lyapunov operator of a fixed Hurwitz matrix.
///
/// Solving for several right-hand sides (the cost, gradient and Hessian-vector
/// oracles need up to four per gain) reuses the factorization.
pub struct LyapunovSolver {
    a: Matrix,
    n: usize,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    l: DMatrix<f64>,
    u: DMatrix<f64>,
}

impl std::fmt::Debug for LyapunovSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LyapunovSolver").field("n", &self.n).finish()
    }
}

impl LyapunovSolver {
    /// Checks that `a` is Hurwitz and factors its Kronecker operator.
    pub fn new(a: &Matrix) -> Result<Self> {
        check_square(a, "A")?;
        let abscissa = spectral_abscissa(a)?;
        if abscissa >= -STABILITY_MARGIN {
            return Err(Error::NotHurwitz { abscissa, margin: STABILITY_MARGIN });
        }
        Self::new_unchecked(a)
    }

    /// Factors without the Hurwitz test; callers that already know the
    /// spectral abscissa use this to avoid a second eigenvalue computation.
    pub(crate) fn new_unchecked(a: &Matrix) -> Result<Self> {
        let n = a.nrows();
        let op = kronecker_operator(a);
        let lu = op.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem);
        }
        let l = lu.l();
        let u = lu.u();
        if u.diagonal().iter().any(|d| *d == 0.0 || !d.is_finite()) {
            return Err(Error::SingularSystem);
        }
        Ok(Self { a: a.clone(), n, lu, l, u })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `Aᵀ X + X A + W = 0`.
    pub fn solve(&self, w: &Matrix) -> Result<Matrix> {
        self.solve_impl(w, false)
    }

    /// Solves `A Y + Y Aᵀ + W = 0`.
    pub fn solve_dual(&self, w: &Matrix) -> Result<Matrix> {
        self.solve_impl(w, true)
    }

    fn solve_impl(&self, w: &Matrix, dual: bool) -> Result<Matrix> {
        if w.nrows() != self.n || w.ncols() != self.n {
            return Err(Error::Dimension(format!(
                "right-hand side is {}x{}, expected {n}x{n}",
                w.nrows(),
                w.ncols(),
                n = self.n
            )));
        }
        let w_norm = w.norm();
        let tol = RESIDUAL_TOL * (1.0 + w_norm);

        let mut x = self.raw_solve(&(-w), dual)?;
        let mut resid = self.residual(&x, w, dual);
        let mut refinements = 0;
        while resid.norm() > tol && refinements < MAX_REFINEMENTS {
            x += self.raw_solve(&(-&resid), dual)?;
            resid = self.residual(&x, w, dual);
            refinements += 1;
        }

        let x = (&x + x.transpose()) * 0.5;
        let r = self.residual(&x, w, dual).norm();
        if !(r <= tol) {
            REJECTED.fetch_add(1, Ordering::Relaxed);
            return Err(Error::SingularSystem);
        }
        SOLVES.fetch_add(1, Ordering::Relaxed);
        WORST_RATIO.fetch_max((r / tol).to_bits(), Ordering::Relaxed);
        Ok(x)
    }

    fn residual(&self, x: &Matrix, w: &Matrix, dual: bool) -> Matrix {
        if dual {
            &self.a * x + x * self.a.transpose() + w
        } else {
            self.a.transpose() * x + x * &self.a + w
        }
    }

    /// One pass through the factorization: `op vec(X) = vec(rhs)`, or the
    /// transposed system when `dual` is set.
    fn raw_solve(&self, rhs: &Matrix, dual: bool) -> Result<Matrix> {
        let n = self.n;
        let b = DVector::from_column_slice(rhs.as_slice());
        let sol = if dual {
            // P·op = L·U, so opᵀ x = b  <=>  Uᵀ Lᵀ (P x) = b.
            let z = self.u.tr_solve_upper_triangular(&b).ok_or(Error::SingularSystem)?;
            let mut w = self.l.tr_solve_lower_triangular(&z).ok_or(Error::SingularSystem)?;
            self.lu.p().inv_permute_rows(&mut w);
            w
        } else {
            self.lu.solve(&b).ok_or(Error::SingularSystem)?
        };
        Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
    }
}

/// The n²×n² matrix `I ⊗ Aᵀ + Aᵀ ⊗ I` acting on column-major `vec(X)`.
pub(crate) fn kronecker_operator(a: &Matrix) -> DMatrix<f64> {
    let n = a.nrows();
    let mut op = DMatrix::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for k in 0..n {
                // (Aᵀ X)_{ij} picks up A_{ki} X_{kj}
                op[(row, k + n * j)] += a[(k, i)];
                // (X A)_{ij} picks up X_{ik} A_{kj}
                op[(row, i + n * k)] += a[(k, j)];
            }
        }
    }
    op
}

/// Solves `Aᵀ X + X A + W = 0` for Hurwitz `A` and symmetric `W`.
pub fn solve_lyapunov(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    LyapunovSolver::new(a)?.solve(w)
}

/// Solves `A Y + Y Aᵀ + W = 0` for Hurwitz `A` and symmetric `W`.
pub fn solve_lyapunov_dual(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    LyapunovSolver::new(a)?.solve_dual(w)
}

fn check_square(a: &Matrix, name: &str) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Dimension(format!("{name} must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteValue("matrix entry"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn lyap_residual(a: &Matrix, x: &Matrix, w: &Matrix) -> f64 {
        (a.transpose() * x + x * a + w).norm()
    }

    #[test]
    fn scalar_equation() {
        let x = solve_lyapunov(&dmatrix![-1.0], &dmatrix![2.0]).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
        let y = solve_lyapunov_dual(&dmatrix![-1.0], &dmatrix![2.0]).unwrap();
        assert!((y[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_identity() {
        let a = -Matrix::identity(2, 2);
        let x = solve_lyapunov(&a, &Matrix::identity(2, 2)).unwrap();
        assert!((x - Matrix::identity(2, 2) * 0.5).norm() < 1e-14);
    }

    #[test]
    fn companion_matrix_matches_closed_form() {
        // For A = [[0,1],[-2,-3]], W = I the solution is [[5/4, 1/4], [1/4, 1/4]]
        // (solve the three linear equations in x11, x12, x22 by hand).
        let a = dmatrix![0.0, 1.0; -2.0, -3.0];
        let w = Matrix::identity(2, 2);
        let x = solve_lyapunov(&a, &w).unwrap();
        assert!(lyap_residual(&a, &x, &w) <= 1e-10 * (1.0 + w.norm()));
        let expected = dmatrix![1.25, 0.25; 0.25, 0.25];
        assert!((x - expected).norm() < 1e-13);
    }

    #[test]
    fn dual_is_transpose_problem() {
        let a = dmatrix![-2.0, 1.0, 0.5; 0.0, -1.0, 0.3; 0.2, -0.4, -3.0];
        let w = dmatrix![2.0, 0.1, 0.0; 0.1, 1.0, 0.2; 0.0, 0.2, 3.0];
        let y = solve_lyapunov_dual(&a, &w).unwrap();
        let x = solve_lyapunov(&a.transpose(), &w).unwrap();
        assert!((x - &y).norm() < 1e-12);
        assert!((&a * &y + &y * a.transpose() + &w).norm() < 1e-10);
    }

    #[test]
    fn symmetric_a_dual_equals_primal() {
        let a = dmatrix![-3.0, 0.5; 0.5, -2.0];
        let w = dmatrix![1.0, 0.2; 0.2, 2.0];
        let x = solve_lyapunov(&a, &w).unwrap();
        let y = solve_lyapunov_dual(&a, &w).unwrap();
        assert!((x - y).norm() < 1e-14);
    }

    #[test]
    fn rejects_non_hurwitz() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        assert!(matches!(solve_lyapunov(&a, &Matrix::identity(2, 2)), Err(Error::NotHurwitz { .. })));
        let a = dmatrix![1.0];
        assert!(matches!(solve_lyapunov(&a, &dmatrix![1.0]), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = -Matrix::identity(2, 2);
        assert!(matches!(solve_lyapunov(&a, &Matrix::identity(3, 3)), Err(Error::Dimension(_))));
        assert!(matches!(solve_lyapunov(&Matrix::zeros(2, 3), &Matrix::identity(2, 2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn shared_factorization_serves_both_equations() {
        let a = dmatrix![-1.0, 2.0; 0.0, -0.5];
        let s = LyapunovSolver::new(&a).unwrap();
        let w = dmatrix![1.0, 0.0; 0.0, 4.0];
        let x = s.solve(&w).unwrap();
        let y = s.solve_dual(&w).unwrap();
        assert!(lyap_residual(&a, &x, &w) < 1e-12);
        assert!((&a * &y + &y * a.transpose() + &w).norm() < 1e-12);
    }
}
