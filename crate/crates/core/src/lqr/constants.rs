use serde::{Deserialize, Serialize};

use super::problem::LqrProblem;
use crate::linalg::{spectral_norm, sym_max_eig, sym_min_eig};
use crate::{Error, Result};

/// Smoothness, Hessian-Lipschitz and PL constants certified on the sublevel set `{f ≤ alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    pub alpha: f64,
    pub xi: f64,
    pub zeta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    /// Smoothness constant.
    pub l1: f64,
    /// Lipschitz constant of the Hessian.
    pub l2: f64,
    /// Optimal cost the PL constant was evaluated with.
    pub f_star: Option<f64>,
    /// PL constant.
    pub mu: Option<f64>,
    /// `l1 / mu`.
    pub kappa_cond: Option<f64>,
}

/// Norms and extreme eigenvalues the constants are built from.
#[derive(Debug, Clone, Copy)]
struct Scalars {
    n: f64,
    a: f64,
    b: f64,
    c: f64,
    c_fro: f64,
    r: f64,
    q_min: f64,
    r_min: f64,
    r_max: f64,
    s_min: f64,
}

impl Scalars {
    fn of(p: &LqrProblem) -> Result<Self> {
        Ok(Self {
            n: p.n() as f64,
            a: spectral_norm(p.a()),
            b: spectral_norm(p.b()),
            c: spectral_norm(p.c()),
            c_fro: p.c().norm(),
            r: spectral_norm(p.r()),
            q_min: sym_min_eig(p.q())?,
            r_min: sym_min_eig(p.r())?,
            r_max: sym_max_eig(p.r())?,
            s_min: sym_min_eig(p.sigma())?,
        })
    }
}

/// Evaluates the constants at sublevel value `alpha`; `mu` and `kappa_cond`
/// are filled only when an optimal cost `f_star` is supplied.
pub fn constants(p: &LqrProblem, alpha: f64, f_star: Option<f64>) -> Result<ConstantsBundle> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidAlpha(alpha));
    }
    if let Some(fs) = f_star {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::InvalidConfig(format!("optimal cost estimate must be positive, got {fs}")));
        }
    }
    let s = Scalars::of(p)?;
    if s.b == 0.0 {
        return Err(Error::ZeroInput);
    }

    let zeta = 2.0 * s.b * alpha / (s.s_min * s.r_min) + s.a / s.b;
    let bc_term = s.b * s.c * alpha / s.s_min;
    let kappa1 = (2.0 / s.q_min) * (bc_term + s.c * s.c * s.r * zeta);
    let kappa2 = kappa1;
    let kappa3 = (2.0 / s.q_min) * ((kappa1 + kappa2) * bc_term + s.c * s.c * s.r);
    let kappa4 = (2.0 / s.q_min) * (2.0 * kappa2 * bc_term + s.c * s.c * s.r);

    let t = alpha * s.b / (s.s_min * s.q_min);
    let xi = (s.n.sqrt() * alpha / s.s_min) * (t + (t * t + s.r_max).sqrt());
    let l1 = (2.0 * alpha / s.q_min) * (s.r_max * s.c * s.c + s.b * s.c_fro * xi);
    let l2 = 2.0 * s.b * s.c * alpha * alpha / (s.q_min * s.s_min) * (2.0 * kappa3 + kappa4);

    let mu = f_star.map(|fs| {
        let denom = s.a + s.b * s.b * alpha / (s.s_min * s.r_min);
        s.r_min * s.s_min * s.s_min * s.q_min / (8.0 * fs * denom * denom)
    });

    Ok(ConstantsBundle {
        alpha,
        xi,
        zeta,
        kappa1,
        kappa2,
        kappa3,
        kappa4,
        l1,
        l2,
        f_star,
        mu,
        kappa_cond: mu.map(|m| l1 / m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn unit() -> LqrProblem {
        let one = dmatrix![1.0];
        LqrProblem::new(dmatrix![0.0], one.clone(), one.clone(), one.clone(), one.clone(), one).unwrap()
    }

    #[test]
    fn unit_instance_hand_values() {
        let c = constants(&unit(), 1.0, None).unwrap();
        assert_eq!(c.zeta, 2.0);
        assert_eq!(c.kappa1, 6.0);
        assert_eq!(c.kappa2, 6.0);
        assert_eq!(c.kappa3, 26.0);
        assert_eq!(c.kappa4, 26.0);
        assert_eq!(c.l2, 156.0);
        let s2 = 2.0f64.sqrt();
        assert!((c.xi - (1.0 + s2)).abs() < 1e-15);
        assert!((c.l1 - (4.0 + 2.0 * s2)).abs() < 1e-14);
        assert!(c.mu.is_none() && c.kappa_cond.is_none());
    }

    #[test]
    fn pl_constant_on_unit_instance() {
        // λ₁R·λ₁Σ²·λ₁Q / (8 f* (‖A‖ + ‖B‖²α/(λ₁Σλ₁R))²) = 1 / (8·1·1) at α = 1, f* = 1
        let c = constants(&unit(), 1.0, Some(1.0)).unwrap();
        assert_eq!(c.mu, Some(0.125));
        assert_eq!(c.kappa_cond, Some(c.l1 / 0.125));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(constants(&unit(), 0.0, None), Err(Error::InvalidAlpha(_))));
        assert!(matches!(constants(&unit(), -1.0, None), Err(Error::InvalidAlpha(_))));
        let one = dmatrix![1.0];
        let p = LqrProblem::new(dmatrix![-1.0], dmatrix![0.0], one.clone(), one.clone(), one.clone(), one).unwrap();
        assert!(matches!(constants(&p, 1.0, None), Err(Error::ZeroInput)));
    }

    #[test]
    fn monotone_in_alpha() {
        let p = unit();
        for alpha in [0.1, 1.0, 7.0, 100.0] {
            let a = constants(&p, alpha, None).unwrap();
            let b = constants(&p, 2.0 * alpha, None).unwrap();
            assert!(b.l1 > a.l1 && b.l2 > a.l2 && b.xi > a.xi);
        }
    }
}
