use super::oracle::Evaluation;
use super::problem::{Gain, Kind, LqrProblem};
use crate::{Error, Matrix, Result};

pub const KLEINMAN_MAX_ITERS: usize = 200;
const STEP_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-9;

/// Output of the Kleinman iteration.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub gain: Gain,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Cost of every iterate, starting with `K0`.
    pub costs: Vec<f64>,
}

/// Optimal state-feedback gain through Kleinman's iteration `K ← R⁻¹BᵀX(K)`.
pub fn care_oracle(p: &LqrProblem, k0: &Matrix) -> Result<Gain> {
    Ok(care_solve(p, k0)?.gain)
}

pub fn care_solve(p: &LqrProblem, k0: &Matrix) -> Result<CareSolution> {
    if p.kind() != Kind::Slqr {
        return Err(Error::InvalidProblem("the Riccati oracle needs a state-feedback problem".into()));
    }
    let r_chol = p.r().clone().cholesky().ok_or_else(|| Error::InvalidProblem("R is not positive definite".into()))?;
    let bt = p.b().transpose();

    let mut k = k0.clone();
    let mut ev = Evaluation::new(p, &k)?;
    let mut costs = vec![ev.cost()];
    let mut last_step = f64::INFINITY;

    for it in 1..=KLEINMAN_MAX_ITERS {
        let k_next = r_chol.solve(&(&bt * ev.x()));
        let step = (&k_next - &k).norm();
        let next = Evaluation::new(p, &k_next)?;
        let converged = step <= STEP_TOL * (1.0 + k.norm());
        // below the rounding floor the step stops shrinking; accept once stationary
        let stalled = it > 2 && step >= last_step;
        k = k_next;
        ev = next;
        costs.push(ev.cost());
        if converged || stalled {
            let grad_norm = ev.gradient()?.norm();
            if grad_norm <= GRAD_TOL {
                return Ok(CareSolution { gain: Gain::new(k)?, cost: ev.cost(), grad_norm, iterations: it, costs });
            }
            if stalled {
                return Err(Error::NoConvergence { iterations: it });
            }
        }
        last_step = step;
    }
    Err(Error::NoConvergence { iterations: KLEINMAN_MAX_ITERS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_optimum() {
        let one = dmatrix![1.0];
        let p = LqrProblem::new(dmatrix![0.0], one.clone(), one.clone(), one.clone(), one.clone(), one).unwrap();
        let sol = care_solve(&p, &dmatrix![2.0]).unwrap();
        assert!((sol.gain[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((sol.cost - 1.0).abs() < 1e-12);
        assert!(sol.costs.windows(2).all(|w| w[1] <= w[0] + 1e-12));

        let again = care_solve(&p, &dmatrix![1.0]).unwrap();
        assert!(again.iterations <= 2);
        assert_eq!(again.gain[(0, 0)], 1.0);
    }

    #[test]
    fn rejects_output_feedback() {
        let p = LqrProblem::new(
            -Matrix::identity(2, 2),
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
            Matrix::identity(2, 2),
            dmatrix![1.0],
            Matrix::identity(2, 2),
        )
        .unwrap();
        assert!(matches!(care_oracle(&p, &dmatrix![0.0]), Err(Error::InvalidProblem(_))));
    }
}
