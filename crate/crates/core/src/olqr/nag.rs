use super::oracle::SmoothOracle;
use crate::{Error, Matrix, Result};

/// Additive slack on the iteration bound before non-convexity is declared.
const SAFETY_MARGIN: f64 = 10.0;

/// Result of [`nag_restart`].
#[derive(Debug, Clone)]
pub struct NagOutcome {
    pub gain: Matrix,
    pub grad_norm: f64,
    /// Accepted iterations.
    pub iterations: u64,
    pub restarts: usize,
    /// Objective at the start point and at every accepted iterate; `restart`
    /// marks the first iterate after a restart.
    pub history: Vec<NagRecord>,
}

#[derive(Debug, Clone)]
pub struct NagRecord {
    pub point: Matrix,
    pub value: f64,
    pub restart: bool,
}

/// Iteration bound with `restarts` restarts:
/// `s + 1 + √κ·ln(2^{s+2} κ^{s+1} L1 Δ / ε²)` plus a fixed margin.
pub fn nag_iteration_bound(restarts: usize, kappa: f64, l1: f64, gap: f64, eps: f64) -> f64 {
    let s = restarts as f64;
    let log_arg = (s + 2.0) * 2f64.ln() + (s + 1.0) * kappa.ln() + (l1 * gap / (eps * eps)).ln();
    s + 1.0 + kappa.sqrt() * log_arg.max(0.0) + SAFETY_MARGIN
}

/// Nesterov's constant-momentum method with function-value restarts.
///
/// `y_{j+1} = K_j − ∇φ(K_j)/L1`, `K_{j+1} = (1+b)y_{j+1} − b·y_j` with
/// `b = (√κ−1)/(√κ+1)`. A trial point whose value reaches `φ` at the current
/// start point (or that leaves the domain) is discarded and the method
/// restarts from `K_j`.
pub fn nag_restart(
    phi: &dyn SmoothOracle,
    y1: &Matrix,
    eps: f64,
    l1: f64,
    sigma1: f64,
    max_restarts: usize,
) -> Result<NagOutcome> {
    if !(eps > 0.0 && l1 > 0.0 && sigma1 > 0.0 && sigma1 <= l1) {
        return Err(Error::InvalidConfig(format!("need eps > 0 and 0 < sigma1 <= L1, got eps={eps}, L1={l1}, sigma1={sigma1}")));
    }
    let kappa = l1 / sigma1;
    let b = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);

    let (mut f_k, mut g) = phi.value_and_gradient(y1)?;
    let gap = g.norm_squared() / (2.0 * sigma1);
    let mut k = y1.clone();
    let mut y_prev = y1.clone();
    let mut threshold = f_k;
    let mut history = vec![NagRecord { point: y1.clone(), value: f_k, restart: false }];
    let mut iterations = 0u64;
    let mut restarts = 0usize;
    let mut restarted = false;

    loop {
        let grad_norm = g.norm();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteValue("gradient"));
        }
        if grad_norm <= eps {
            return Ok(NagOutcome { gain: k, grad_norm, iterations, restarts, history });
        }
        let bound = nag_iteration_bound(restarts, kappa, l1, gap, eps);
        if iterations as f64 > 2.0 * bound {
            return Err(Error::NonConvexDetected { iterations, bound });
        }

        let y_next = &k - &g / l1;
        let k_next = &y_next * (1.0 + b) - &y_prev * b;
        let trial = match phi.value(&k_next) {
            Ok(v) if v < threshold => Some(v),
            Ok(_) | Err(Error::LeftFeasibleSet { .. }) => None,
            Err(e) => return Err(e),
        };
        match trial {
            Some(v) => {
                g = phi.gradient(&k_next)?;
                history.push(NagRecord { point: k_next.clone(), value: v, restart: restarted });
                k = k_next;
                y_prev = y_next;
                f_k = v;
                iterations += 1;
                restarted = false;
            }
            None => {
                restarts += 1;
                if restarts > max_restarts {
                    return Err(Error::RestartBudgetExceeded { limit: max_restarts });
                }
                y_prev = k.clone();
                threshold = f_k;
                restarted = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::olqr::FnOracle;
    use nalgebra::dmatrix;

    fn shifted_square(center: Matrix) -> FnOracle<'static> {
        let c1 = center.clone();
        let c2 = center;
        FnOracle::new((1, 2), move |k| 0.5 * (k - &c1).norm_squared(), move |k| k - &c2, |_, e| e.clone())
    }

    #[test]
    fn unit_quadratic_converges_fast() {
        let center = dmatrix![3.0, -4.0];
        let phi = shifted_square(center.clone());
        let y1 = dmatrix![0.0, 0.0];
        let eps = 1e-8;
        let out = nag_restart(&phi, &y1, eps, 1.0, 1.0, 20).unwrap();
        assert!((out.gain - center).norm() <= eps);
        let gap: f64 = 12.5;
        assert!(out.iterations as f64 <= (4.0 * gap / (eps * eps)).ln().ceil() + 2.0);
    }

    #[test]
    fn minimizer_returns_at_once() {
        let center = dmatrix![1.0, 1.0];
        let out = nag_restart(&shifted_square(center.clone()), &center, 1e-9, 1.0, 1.0, 0).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.gain, center);
    }

    #[test]
    fn concave_input_is_detected() {
        let phi = FnOracle::new((1, 1), |k| -0.5 * k[(0, 0)].powi(2) + 0.001 * k[(0, 0)], |k| k * -1.0 + dmatrix![0.001], |_, e| -e);
        let err = nag_restart(&phi, &dmatrix![0.0], 1e-9, 1.0, 1.0, 5).unwrap_err();
        assert!(matches!(err, Error::RestartBudgetExceeded { .. } | Error::NonConvexDetected { .. }), "{err:?}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let phi = shifted_square(dmatrix![0.0, 0.0]);
        assert!(nag_restart(&phi, &dmatrix![1.0, 1.0], 1e-6, 1.0, 2.0, 3).is_err());
        assert!(nag_restart(&phi, &dmatrix![1.0, 1.0], 0.0, 1.0, 1.0, 3).is_err());
    }
}
