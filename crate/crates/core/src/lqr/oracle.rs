use std::cell::{Cell, OnceCell};

use super::problem::LqrProblem;
use crate::linalg::{spectral_abscissa, unvec, LyapunovSolver, STABILITY_MARGIN};
use crate::{Error, Matrix, Result};

/// `A − B K C`.
pub fn closed_loop(p: &LqrProblem, k: &Matrix) -> Matrix {
    p.a() - p.b() * k * p.c()
}

/// Whether every eigenvalue of `A − BKC` has real part below `-STABILITY_MARGIN`.
pub fn is_stabilizing(p: &LqrProblem, k: &Matrix) -> bool {
    if p.check_gain(k).is_err() {
        return false;
    }
    matches!(spectral_abscissa(&closed_loop(p, k)), Ok(s) if s < -STABILITY_MARGIN)
}

/// Cost, gradient and Hessian information at one gain.
///
/// The closed-loop Lyapunov operator is factored once; `X` is solved eagerly
/// and `Y` on first use.
pub struct Evaluation<'p> {
    problem: &'p LqrProblem,
    k: Matrix,
    solver: LyapunovSolver,
    x: Matrix,
    y: OnceCell<Matrix>,
    cost: f64,
    solves: Cell<u64>,
}

/// Value of `∇²f(K)[E, E]` with the auxiliary Lyapunov solutions behind it.
#[derive(Debug, Clone)]
pub struct HessianForm {
    pub x_prime: Matrix,
    pub y_prime: Matrix,
    pub value: f64,
}

impl<'p> Evaluation<'p> {
    pub fn new(problem: &'p LqrProblem, k: &Matrix) -> Result<Self> {
        problem.check_gain(k)?;
        let a_k = closed_loop(problem, k);
        match spectral_abscissa(&a_k) {
            Ok(s) if s < -STABILITY_MARGIN => {}
            _ => return Err(Error::NotStabilizing),
        }
        let solver = LyapunovSolver::new_unchecked(&a_k)?;
        let kc = k * problem.c();
        let w = kc.transpose() * problem.r() * &kc + problem.q();
        let x = solver.solve(&w)?;
        let cost = (&x * problem.sigma()).trace();
        if !cost.is_finite() {
            return Err(Error::NonFiniteValue("cost"));
        }
        Ok(Self { problem, k: k.clone(), solver, x, y: OnceCell::new(), cost, solves: Cell::new(1) })
    }

    pub fn gain(&self) -> &Matrix {
        &self.k
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Solution of `A_Kᵀ X + X A_K + CᵀKᵀRKC + Q = 0`.
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    /// Solution of `A_K Y + Y A_Kᵀ + Σ = 0`.
    pub fn y(&self) -> Result<&Matrix> {
        if self.y.get().is_none() {
            let y = self.solver.solve_dual(self.problem.sigma())?;
            self.solves.set(self.solves.get() + 1);
            let _ = self.y.set(y);
        }
        Ok(self.y.get().expect("initialized above"))
    }

    /// Number of Lyapunov solves spent so far on this gain.
    pub fn lyap_solves(&self) -> u64 {
        self.solves.get()
    }

    /// `M = RKC − BᵀX`.
    fn m_matrix(&self) -> Matrix {
        self.problem.r() * &self.k * self.problem.c() - self.problem.b().transpose() * &self.x
    }

    /// `2 (RKC − BᵀX) Y Cᵀ`.
    pub fn gradient(&self) -> Result<Matrix> {
        let y = self.y()?;
        Ok(self.m_matrix() * y * self.problem.c().transpose() * 2.0)
    }

    fn directional(&self, e: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
        self.problem.check_gain(e)?;
        let p = self.problem;
        let y = self.y()?.clone();
        let m = self.m_matrix();
        let mec = m.transpose() * e * p.c();
        let x_prime = self.solver.solve(&(&mec + mec.transpose()))?;
        let becy = p.b() * e * p.c() * &y;
        let y_prime = self.solver.solve_dual(&(-(&becy + becy.transpose())))?;
        self.solves.set(self.solves.get() + 2);
        let ct = p.c().transpose();
        let dgrad = (p.r() * e * p.c() - p.b().transpose() * &x_prime) * &y * &ct * 2.0 + m * &y_prime * &ct * 2.0;
        Ok((x_prime, y_prime, dgrad))
    }

    /// Exact Hessian-vector product `∇²f(K)[E]`.
    pub fn hvp(&self, e: &Matrix) -> Result<Matrix> {
        Ok(self.directional(e)?.2)
    }

    pub fn hessian_form(&self, e: &Matrix) -> Result<HessianForm> {
        let (x_prime, y_prime, dgrad) = self.directional(e)?;
        Ok(HessianForm { x_prime, y_prime, value: dgrad.dot(e) })
    }

    /// Dense Hessian in the column-major `vec(K)` basis, before symmetrization.
    pub fn dense_hessian_unsymmetrized(&self) -> Result<Matrix> {
        let (m, r) = (self.k.nrows(), self.k.ncols());
        let d = m * r;
        let mut h = Matrix::zeros(d, d);
        for j in 0..d {
            let mut basis = nalgebra::DVector::zeros(d);
            basis[j] = 1.0;
            let col = self.hvp(&unvec(&basis, m, r))?;
            h.set_column(j, &nalgebra::DVector::from_column_slice(col.as_slice()));
        }
        Ok(h)
    }

    pub fn dense_hessian(&self) -> Result<Matrix> {
        let h = self.dense_hessian_unsymmetrized()?;
        Ok((&h + h.transpose()) * 0.5)
    }
}

/// `f(K) = Tr(X Σ)`.
pub fn cost(p: &LqrProblem, k: &Matrix) -> Result<f64> {
    Ok(Evaluation::new(p, k)?.cost())
}

pub fn gradient(p: &LqrProblem, k: &Matrix) -> Result<Matrix> {
    Evaluation::new(p, k)?.gradient()
}

pub fn cost_and_gradient(p: &LqrProblem, k: &Matrix) -> Result<(f64, Matrix)> {
    let ev = Evaluation::new(p, k)?;
    Ok((ev.cost(), ev.gradient()?))
}

/// `∇²f(K)[E, E]`.
pub fn hessian_quadratic_form(p: &LqrProblem, k: &Matrix, e: &Matrix) -> Result<f64> {
    Ok(Evaluation::new(p, k)?.hessian_form(e)?.value)
}

pub fn hvp_exact(p: &LqrProblem, k: &Matrix, e: &Matrix) -> Result<Matrix> {
    Evaluation::new(p, k)?.hvp(e)
}

/// Forward difference `(∇f(K + hE) − ∇f(K)) / h`.
pub fn hvp_fd(p: &LqrProblem, k: &Matrix, e: &Matrix, h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    p.check_gain(e)?;
    let g0 = gradient(p, k)?;
    let g1 = gradient(p, &(k + e * h))?;
    Ok((g1 - g0) / h)
}

/// Default forward-difference step `√ε_mach · (1 + ‖K‖_F)`.
pub fn default_hvp_step(k: &Matrix) -> f64 {
    f64::EPSILON.sqrt() * (1.0 + k.norm())
}

/// Default central-difference step `∛ε_mach · (1 + ‖K‖_F)`.
pub fn default_gradient_step(k: &Matrix) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + k.norm())
}

/// Symmetrized dense Hessian over `vec(K)`.
pub fn assemble_dense_hessian(p: &LqrProblem, k: &Matrix) -> Result<Matrix> {
    Evaluation::new(p, k)?.dense_hessian()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar(q: f64, r: f64) -> LqrProblem {
        let one = dmatrix![1.0];
        LqrProblem::new(dmatrix![0.0], one.clone(), one.clone(), dmatrix![q], dmatrix![r], one).unwrap()
    }

    #[test]
    fn scalar_cost_matches_closed_form() {
        for (q, r, k) in [(1.0, 1.0, 1.0), (2.0, 0.5, 3.0), (0.3, 4.0, 0.2)] {
            let f = cost(&scalar(q, r), &dmatrix![k]).unwrap();
            let expected = (q + r * k * k) / (2.0 * k);
            assert!((f - expected).abs() < 1e-14 * expected, "{f} vs {expected}");
        }
    }

    #[test]
    fn scalar_derivatives() {
        let p = scalar(1.0, 1.0);
        let k = dmatrix![1.0];
        assert!(gradient(&p, &k).unwrap()[(0, 0)].abs() < 1e-15);
        let e = dmatrix![1.0];
        assert!((hessian_quadratic_form(&p, &k, &e).unwrap() - 1.0).abs() < 1e-14);
        assert!((hvp_exact(&p, &k, &e).unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((hvp_fd(&p, &k, &e, 1e-6).unwrap()[(0, 0)] - 1.0).abs() < 1e-4);
        assert_eq!(assemble_dense_hessian(&p, &k).unwrap().shape(), (1, 1));
        // f'(k) = r/2 − q/(2k²) at k = 2
        let g = gradient(&p, &dmatrix![2.0]).unwrap()[(0, 0)];
        assert!((g - (0.5 - 1.0 / 8.0)).abs() < 1e-14);
    }

    #[test]
    fn open_loop_stable_cost() {
        let n = 3;
        let p = LqrProblem::state_feedback(
            -Matrix::identity(n, n),
            dmatrix![1.0, 0.0; 2.0, 1.0; 0.0, 3.0],
            Matrix::identity(n, n),
            Matrix::identity(2, 2) * 5.0,
            Matrix::identity(n, n),
        )
        .unwrap();
        let f = cost(&p, &p.zero_gain()).unwrap();
        assert!((f - 1.5).abs() < 1e-14);
    }

    #[test]
    fn not_stabilizing_is_reported() {
        let p = scalar(1.0, 1.0);
        assert!(!is_stabilizing(&p, &dmatrix![0.0]));
        assert!(!is_stabilizing(&p, &dmatrix![-1.0]));
        assert!(matches!(cost(&p, &dmatrix![0.0]), Err(Error::NotStabilizing)));
        assert!(matches!(hvp_fd(&p, &dmatrix![1.0], &dmatrix![-1.0], 2.0), Err(Error::NotStabilizing)));
    }

    #[test]
    fn zero_direction() {
        let p = scalar(1.0, 1.0);
        let k = dmatrix![1.7];
        let z = dmatrix![0.0];
        assert_eq!(hessian_quadratic_form(&p, &k, &z).unwrap(), 0.0);
        assert_eq!(hvp_exact(&p, &k, &z).unwrap()[(0, 0)], 0.0);
        assert_eq!(hvp_fd(&p, &k, &z, 1e-6).unwrap()[(0, 0)], 0.0);
    }
}
