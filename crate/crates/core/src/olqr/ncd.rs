use nalgebra::DVector;

use super::oracle::SmoothOracle;
use crate::linalg::{min_eig_estimate, unvec, vec, LinearOperator};
use crate::{Error, Matrix, Result};

/// Parameters of [`ncd`].
#[derive(Debug, Clone, Copy)]
pub struct NcdConfig {
    /// Overall failure probability.
    pub delta: f64,
    /// Bound on the Hessian norm, used for the eigen-probe budget.
    pub l1: f64,
    /// Hessian Lipschitz constant.
    pub l2: f64,
    /// Curvature threshold.
    pub alpha: f64,
    /// Upper bound on `ψ(K1) − inf ψ`.
    pub delta_f: f64,
    pub seed: u64,
}

impl NcdConfig {
    /// Per-probe failure probability `δ / (1 + L2²Δ/α³)`.
    pub fn probe_failure_prob(&self) -> f64 {
        self.delta / (1.0 + self.l2 * self.l2 * self.delta_f / self.alpha.powi(3))
    }

    /// Iteration bound `1 + 12 L2² Δ / α³`.
    pub fn iteration_bound(&self) -> f64 {
        1.0 + 12.0 * self.l2 * self.l2 * self.delta_f / self.alpha.powi(3)
    }

    /// Guaranteed decrease `α³ / (12 L2²)` of one curvature step.
    pub fn step_decrease(&self) -> f64 {
        self.alpha.powi(3) / (12.0 * self.l2 * self.l2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NcdStep {
    pub before: f64,
    pub after: f64,
    /// `vᵀ∇²ψ v` along the step direction.
    pub curvature: f64,
}

#[derive(Debug, Clone)]
pub struct NcdOutcome {
    pub gain: Matrix,
    pub steps: Vec<NcdStep>,
    /// Eigen-probes run (curvature steps + the final one).
    pub probes: u64,
    /// Rayleigh quotient of the last probe.
    pub last_estimate: f64,
}

/// Mixes a base seed with a counter into an independent stream seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Negative curvature descent driven one eigen-probe at a time.
pub struct NcdRun<'a> {
    psi: &'a dyn SmoothOracle,
    cfg: NcdConfig,
    k: Matrix,
    value: f64,
    steps: Vec<NcdStep>,
    probes: u64,
    last_estimate: f64,
    max_steps: u64,
    done: bool,
}

impl<'a> NcdRun<'a> {
    pub fn new(psi: &'a dyn SmoothOracle, k1: &Matrix, cfg: &NcdConfig) -> Result<Self> {
        if !(cfg.alpha > 0.0 && cfg.alpha <= cfg.l1 && cfg.l2 > 0.0 && cfg.delta > 0.0 && cfg.delta < 1.0 && cfg.delta_f >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid NCD parameters {cfg:?}")));
        }
        Ok(Self {
            psi,
            cfg: *cfg,
            k: k1.clone(),
            value: psi.value(k1)?,
            steps: Vec::new(),
            probes: 0,
            last_estimate: f64::NAN,
            max_steps: (12.0 * cfg.l2 * cfg.l2 * cfg.delta_f / cfg.alpha.powi(3)).floor() as u64,
            done: false,
        })
    }

    pub fn gain(&self) -> &Matrix {
        &self.k
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Probes the curvature at the current point and takes one step if it is
    /// below `−α/2`. Returns `None` once the point passes the test.
    pub fn step(&mut self) -> Result<Option<NcdStep>> {
        if self.done {
            return Ok(None);
        }
        let (m, r) = self.psi.shape();
        let psi = self.psi;
        let at = self.k.clone();
        let mut op = LinearOperator::new(m * r, move |v: &DVector<f64>| Ok(vec(&psi.hvp(&at, &unvec(v, m, r))?)));
        let est = min_eig_estimate(
            &mut op,
            self.cfg.l1,
            self.cfg.alpha,
            self.cfg.probe_failure_prob(),
            derive_seed(self.cfg.seed, self.probes),
        )
        .map_err(|e| match e {
            Error::BudgetExceeded { .. } | Error::EigenFailure => Error::EigenBudgetExceeded(Box::new(e)),
            other => other,
        })?;
        self.probes += 1;
        self.last_estimate = est.value;
        if est.value > -self.cfg.alpha / 2.0 {
            self.done = true;
            return Ok(None);
        }
        if self.steps.len() as u64 >= self.max_steps {
            return Err(Error::IterationBudgetExceeded { routine: "ncd", limit: self.max_steps + 1 });
        }
        let v = unvec(&est.vector, m, r);
        let g = self.psi.gradient(&self.k)?;
        let sign = if v.dot(&g) >= 0.0 { 1.0 } else { -1.0 };
        let k_next = &self.k - &v * (2.0 * est.value.abs() / self.cfg.l2 * sign);
        let after = self.psi.value(&k_next)?;
        let step = NcdStep { before: self.value, after, curvature: est.value };
        self.steps.push(step);
        self.k = k_next;
        self.value = after;
        Ok(Some(step))
    }

    pub fn into_outcome(self) -> NcdOutcome {
        NcdOutcome { gain: self.k, steps: self.steps, probes: self.probes, last_estimate: self.last_estimate }
    }
}

/// Negative curvature descent: while an approximate smallest eigenvector `v`
/// has `vᵀ∇²ψ v ≤ −α/2`, step `K ← K − (2|vᵀ∇²ψ v|/L2)·sign(⟨v, ∇ψ⟩)·v`.
pub fn ncd(psi: &dyn SmoothOracle, k1: &Matrix, cfg: &NcdConfig) -> Result<NcdOutcome> {
    let mut run = NcdRun::new(psi, k1, cfg)?;
    while run.step()?.is_some() {}
    Ok(run.into_outcome())
}
