use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Matrix, Result};

type ApplyFn<'a> = dyn FnMut(&DVector<f64>) -> Result<DVector<f64>> + 'a;

/// A symmetric linear map given only through its action on vectors.
pub struct LinearOperator<'a> {
    dim: usize,
    apply: Box<ApplyFn<'a>>,
}

impl<'a> LinearOperator<'a> {
    pub fn new(dim: usize, apply: impl FnMut(&DVector<f64>) -> Result<DVector<f64>> + 'a) -> Self {
        Self { dim, apply: Box::new(apply) }
    }

    pub fn from_matrix(m: &'a Matrix) -> Self {
        Self::new(m.nrows(), move |v| Ok(m * v))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&mut self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let out = (self.apply)(v)?;
        if out.len() != self.dim {
            return Err(Error::Dimension(format!("operator returned length {}, expected {}", out.len(), self.dim)));
        }
        Ok(out)
    }
}

/// Result of [`min_eig_estimate`].
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    /// Rayleigh quotient `vᵀHv`.
    pub value: f64,
    /// Unit-norm direction.
    pub vector: DVector<f64>,
    /// Operator applications spent.
    pub applications: usize,
}

/// Iteration cap `⌈4·√(L1/α)·ln(4d/δ)⌉`.
pub fn lanczos_cap(dim: usize, upper_bound: f64, accuracy: f64, failure_prob: f64) -> usize {
    let cap = 4.0 * (upper_bound / accuracy).sqrt() * (4.0 * dim as f64 / failure_prob).ln();
    cap.ceil().max(1.0) as usize
}

/// Approximate smallest eigenpair of a symmetric operator with `‖H‖ ≤ upper_bound`.
///
/// Lanczos with full reorthogonalization from a seeded random start. The
/// Krylov space of `H` equals that of `L1·I − H`, so this is the leading
/// eigenvector computation of the shifted operator. The run stops at
/// `min(cap, dim)` steps or on an invariant subspace; a capped run whose
/// smallest Ritz value still moves by more than `α/2` in the last step is
/// reported as `BudgetExceeded`.
pub fn min_eig_estimate(
    op: &mut LinearOperator<'_>,
    upper_bound: f64,
    accuracy: f64,
    failure_prob: f64,
    seed: u64,
) -> Result<EigenEstimate> {
    let d = op.dim();
    if d == 0 {
        return Err(Error::Dimension("operator dimension is zero".into()));
    }
    if !(accuracy > 0.0 && upper_bound > 0.0) {
        return Err(Error::InvalidConfig(format!("need 0 < alpha and 0 < L1, got alpha={accuracy}, L1={upper_bound}")));
    }
    if !(failure_prob > 0.0 && failure_prob < 1.0) {
        return Err(Error::InvalidConfig(format!("failure probability must lie in (0,1), got {failure_prob}")));
    }
    let cap = lanczos_cap(d, upper_bound, accuracy, failure_prob);
    let steps = cap.min(d);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    q /= q.norm();

    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut applications = 0;
    let mut invariant = false;
    let breakdown = 1e-12 * upper_bound.max(1.0);

    for k in 0..steps {
        let mut w = op.apply(&basis[k])?;
        applications += 1;
        if !w.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteValue("operator output"));
        }
        let a = basis[k].dot(&w);
        alphas.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for qi in &basis {
                let c = qi.dot(&w);
                w.axpy(-c, qi, 1.0);
            }
        }
        let b = w.norm();
        if b <= breakdown {
            invariant = true;
            break;
        }
        if k + 1 < steps {
            betas.push(b);
            basis.push(w / b);
        }
    }

    let m = alphas.len();
    let (theta, s) = smallest_ritz(&alphas, &betas[..m - 1])?;
    if cap < d && !invariant && m > 1 {
        let (prev, _) = smallest_ritz(&alphas[..m - 1], &betas[..m - 2])?;
        if (prev - theta).abs() > accuracy / 2.0 {
            return Err(Error::BudgetExceeded { iterations: m });
        }
    }

    let mut v = DVector::zeros(d);
    for (qi, si) in basis.iter().zip(s.iter()) {
        v.axpy(*si, qi, 1.0);
    }
    v /= v.norm();
    let hv = op.apply(&v)?;
    applications += 1;
    Ok(EigenEstimate { value: v.dot(&hv), vector: v, applications })
}

fn smallest_ritz(alphas: &[f64], betas: &[f64]) -> Result<(f64, DVector<f64>)> {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::try_new(t, f64::EPSILON, 1000 * m.max(4)).ok_or(Error::EigenFailure)?;
    let i = eig.eigenvalues.argmin().0;
    Ok((eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
}
