use super::nag::nag_restart;
use super::oracle::{Regularized, SmoothOracle};
use crate::{Error, Matrix, Result};

/// Hard cap on proximal steps regardless of the progress-based budget.
const MAX_OUTER: u64 = 1_000_000;

/// Result of [`semiconvex_nag`].
#[derive(Debug, Clone)]
pub struct SnagOutcome {
    pub gain: Matrix,
    pub grad_norm: f64,
    /// Proximal (outer) steps taken.
    pub outer_steps: u64,
    pub nag_iterations: u64,
    pub nag_restarts: usize,
    pub value_start: f64,
    pub value_end: f64,
}

/// Inner tolerance `ε·√(γ / (50(L1 + 2γ)))`.
pub fn inner_tolerance(eps: f64, l1: f64, gamma: f64) -> f64 {
    eps * (gamma / (50.0 * (l1 + 2.0 * gamma))).sqrt()
}

/// Sufficient-decrease inequality `ψ(K1) − ψ(K) ≥ min(γ‖K−K1‖², (ε/√10)‖K−K1‖)`,
/// with a relative rounding slack.
pub fn decrease_holds(psi_start: f64, psi_end: f64, dist: f64, gamma: f64, eps: f64) -> bool {
    let need = (gamma * dist * dist).min(eps / 10f64.sqrt() * dist);
    psi_start - psi_end >= need - 1e-12 * (1.0 + psi_start.abs())
}

/// Proximal-point scheme for a `γ`-semiconvex `ψ`: each step minimizes
/// `ψ(K) + γ‖K − K_j‖²` with restarted NAG (strong convexity `γ`, smoothness `L1 + 2γ`).
pub fn semiconvex_nag(
    psi: &dyn SmoothOracle,
    k1: &Matrix,
    eps: f64,
    l1: f64,
    gamma: f64,
    max_restarts: usize,
) -> Result<SnagOutcome> {
    if !(eps > 0.0 && gamma > 0.0 && gamma <= l1) {
        return Err(Error::InvalidConfig(format!("need eps > 0 and 0 < gamma <= L1, got eps={eps}, gamma={gamma}, L1={l1}")));
    }
    let eps_inner = inner_tolerance(eps, l1, gamma);
    let (value_start, mut g) = psi.value_and_gradient(k1)?;
    let mut k = k1.clone();
    let mut value = value_start;
    let mut outer_steps = 0u64;
    let mut nag_iterations = 0u64;
    let mut nag_restarts = 0usize;

    loop {
        let grad_norm = g.norm();
        if grad_norm <= eps {
            return Ok(SnagOutcome { gain: k, grad_norm, outer_steps, nag_iterations, nag_restarts, value_start, value_end: value });
        }
        let budget = 2.0 * (1.0 + 5.0 * gamma * (value_start - value) / (eps * eps));
        if outer_steps as f64 > budget.max(2.0) || outer_steps >= MAX_OUTER {
            return Err(Error::IterationBudgetExceeded { routine: "semiconvex_nag", limit: budget.min(MAX_OUTER as f64) as u64 });
        }
        let g_j = Regularized::new(psi, &k, gamma);
        let inner = nag_restart(&g_j, &k, eps_inner, l1 + 2.0 * gamma, gamma, max_restarts)?;
        nag_iterations += inner.iterations;
        nag_restarts += inner.restarts;
        k = inner.gain;
        (value, g) = psi.value_and_gradient(&k)?;
        outer_steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::olqr::{nag_restart, FnOracle};
    use nalgebra::dmatrix;

    #[test]
    fn convex_quadratic_matches_nag() {
        let diag = dmatrix![1.0, 4.0];
        let d1 = diag.clone();
        let d2 = diag.clone();
        let psi = FnOracle::new(
            (1, 2),
            move |k| 0.5 * k.component_mul(&d1).dot(k),
            move |k| k.component_mul(&d2),
            move |_, e| e.component_mul(&diag),
        );
        let k1 = dmatrix![2.0, -1.0];
        let eps = 1e-6;
        let a = semiconvex_nag(&psi, &k1, eps, 4.0, 1.0, 20).unwrap();
        let b = nag_restart(&psi, &k1, eps, 4.0, 1.0, 20).unwrap();
        assert!(a.grad_norm <= eps);
        assert!((a.gain - b.gain).norm() <= 2.0 * eps);
        assert!(decrease_holds(a.value_start, a.value_end, (dmatrix![2.0, -1.0] - dmatrix![0.0, 0.0]).norm(), 1.0, eps));
    }

    #[test]
    fn quartic_in_convex_region() {
        // ψ(x) = x⁴ − x² with ψ'' ≥ −2 everywhere; started at x = 2 it settles at 1/√2.
        let psi = FnOracle::new(
            (1, 1),
            |k| k[(0, 0)].powi(4) - k[(0, 0)].powi(2),
            |k| dmatrix![4.0 * k[(0, 0)].powi(3) - 2.0 * k[(0, 0)]],
            |k, e| e * (12.0 * k[(0, 0)].powi(2) - 2.0),
        )
        .with_domain(|k| k[(0, 0)] > 0.2 && k[(0, 0)] < 2.5);
        let k1 = dmatrix![2.0];
        let eps = 1e-6;
        let gamma = 2.0;
        let out = semiconvex_nag(&psi, &k1, eps, 80.0, gamma, 20).unwrap();
        let x = out.gain[(0, 0)];
        assert!((4.0 * x.powi(3) - 2.0 * x).abs() <= eps);
        assert!((x - 0.5f64.sqrt()).abs() < 1e-6);
        assert!(decrease_holds(out.value_start, out.value_end, (x - 2.0).abs(), gamma, eps));
    }

    #[test]
    fn inner_tolerance_formula() {
        assert_eq!(inner_tolerance(1.0, 48.0, 1.0), (1.0f64 / 2500.0).sqrt());
    }
}
