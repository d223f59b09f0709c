use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::lqr::{default_hvp_step, Evaluation, LqrProblem};
use crate::{Error, Matrix, Result};

/// Work counters of an oracle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounts {
    pub value: u64,
    pub gradient: u64,
    pub hvp: u64,
    pub lyap_solves: u64,
}

impl OracleCounts {
    /// All value, gradient and Hessian-vector queries.
    pub fn total(&self) -> u64 {
        self.value + self.gradient + self.hvp
    }
}

#[derive(Debug, Default)]
struct Counters {
    value: Cell<u64>,
    gradient: Cell<u64>,
    hvp: Cell<u64>,
    lyap: Cell<u64>,
}

impl Counters {
    fn bump(c: &Cell<u64>, by: u64) {
        c.set(c.get() + by);
    }

    fn snapshot(&self) -> OracleCounts {
        OracleCounts { value: self.value.get(), gradient: self.gradient.get(), hvp: self.hvp.get(), lyap_solves: self.lyap.get() }
    }
}

/// Objective with value, gradient and Hessian-vector products on a domain.
///
/// Queries outside the domain fail with [`Error::LeftFeasibleSet`].
pub trait SmoothOracle {
    /// Shape of the argument.
    fn shape(&self) -> (usize, usize);
    fn in_domain(&self, k: &Matrix) -> bool;
    fn value(&self, k: &Matrix) -> Result<f64>;
    fn gradient(&self, k: &Matrix) -> Result<Matrix>;
    fn hvp(&self, k: &Matrix, e: &Matrix) -> Result<Matrix>;
    fn counts(&self) -> OracleCounts;

    fn value_and_gradient(&self, k: &Matrix) -> Result<(f64, Matrix)> {
        Ok((self.value(k)?, self.gradient(k)?))
    }
}

/// How Hessian-vector products of the LQR cost are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HvpMode {
    #[default]
    Exact,
    /// Forward difference of gradients with step `√ε_mach(1 + ‖K‖_F)`.
    FiniteDifference,
}

/// The LQR cost restricted to stabilizing gains with `f ≤ bound`.
pub struct LqrObjective<'p> {
    problem: &'p LqrProblem,
    bound: Option<f64>,
    mode: HvpMode,
    counters: Counters,
}

impl<'p> LqrObjective<'p> {
    pub fn new(problem: &'p LqrProblem) -> Self {
        Self { problem, bound: None, mode: HvpMode::Exact, counters: Counters::default() }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn with_hvp_mode(mut self, mode: HvpMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn problem(&self) -> &LqrProblem {
        self.problem
    }

    fn evaluate(&self, k: &Matrix) -> Result<Evaluation<'p>> {
        let ev = match Evaluation::new(self.problem, k) {
            Ok(ev) => ev,
            Err(Error::NotStabilizing) => return Err(Error::LeftFeasibleSet { gain: k.clone() }),
            Err(e) => return Err(e),
        };
        Counters::bump(&self.counters.lyap, 1);
        if self.bound.is_some_and(|b| ev.cost() > b) {
            return Err(Error::LeftFeasibleSet { gain: k.clone() });
        }
        Ok(ev)
    }

    fn gradient_of(&self, ev: &Evaluation<'_>) -> Result<Matrix> {
        let before = ev.lyap_solves();
        let g = ev.gradient()?;
        Counters::bump(&self.counters.lyap, ev.lyap_solves() - before);
        Ok(g)
    }
}

impl SmoothOracle for LqrObjective<'_> {
    fn shape(&self) -> (usize, usize) {
        self.problem.gain_shape()
    }

    fn in_domain(&self, k: &Matrix) -> bool {
        match Evaluation::new(self.problem, k) {
            Ok(ev) => self.bound.map_or(true, |b| ev.cost() <= b),
            Err(_) => false,
        }
    }

    fn value(&self, k: &Matrix) -> Result<f64> {
        Counters::bump(&self.counters.value, 1);
        Ok(self.evaluate(k)?.cost())
    }

    fn gradient(&self, k: &Matrix) -> Result<Matrix> {
        Counters::bump(&self.counters.gradient, 1);
        let ev = self.evaluate(k)?;
        self.gradient_of(&ev)
    }

    fn value_and_gradient(&self, k: &Matrix) -> Result<(f64, Matrix)> {
        Counters::bump(&self.counters.value, 1);
        Counters::bump(&self.counters.gradient, 1);
        let ev = self.evaluate(k)?;
        Ok((ev.cost(), self.gradient_of(&ev)?))
    }

    fn hvp(&self, k: &Matrix, e: &Matrix) -> Result<Matrix> {
        Counters::bump(&self.counters.hvp, 1);
        match self.mode {
            HvpMode::Exact => {
                let ev = self.evaluate(k)?;
                let before = ev.lyap_solves();
                let out = ev.hvp(e)?;
                Counters::bump(&self.counters.lyap, ev.lyap_solves() - before);
                Ok(out)
            }
            HvpMode::FiniteDifference => {
                // Only K is guarded; the probe point may sit just outside the
                // sublevel set, and falls back to a backward step if unstable.
                let h = default_hvp_step(k);
                let g0 = self.gradient_of(&self.evaluate(k)?)?;
                let probe = |step: f64| match Evaluation::new(self.problem, &(k + e * step)) {
                    Ok(ev) => {
                        Counters::bump(&self.counters.lyap, 1);
                        self.gradient_of(&ev).map(Some)
                    }
                    Err(Error::NotStabilizing) => Ok(None),
                    Err(err) => Err(err),
                };
                match probe(h)? {
                    Some(g1) => Ok((g1 - g0) / h),
                    None => match probe(-h)? {
                        Some(g1) => Ok((g0 - g1) / h),
                        None => Err(Error::LeftFeasibleSet { gain: k.clone() }),
                    },
                }
            }
        }
    }

    fn counts(&self) -> OracleCounts {
        self.counters.snapshot()
    }
}

type ValueFn<'a> = Box<dyn Fn(&Matrix) -> f64 + 'a>;
type GradFn<'a> = Box<dyn Fn(&Matrix) -> Matrix + 'a>;
type HvpFn<'a> = Box<dyn Fn(&Matrix, &Matrix) -> Matrix + 'a>;
type DomainFn<'a> = Box<dyn Fn(&Matrix) -> bool + 'a>;

/// Oracle assembled from closures; the domain is everything unless restricted.
pub struct FnOracle<'a> {
    shape: (usize, usize),
    value: ValueFn<'a>,
    gradient: GradFn<'a>,
    hvp: HvpFn<'a>,
    domain: DomainFn<'a>,
    counters: Counters,
}

impl<'a> FnOracle<'a> {
    pub fn new(
        shape: (usize, usize),
        value: impl Fn(&Matrix) -> f64 + 'a,
        gradient: impl Fn(&Matrix) -> Matrix + 'a,
        hvp: impl Fn(&Matrix, &Matrix) -> Matrix + 'a,
    ) -> Self {
        Self {
            shape,
            value: Box::new(value),
            gradient: Box::new(gradient),
            hvp: Box::new(hvp),
            domain: Box::new(|_| true),
            counters: Counters::default(),
        }
    }

    pub fn with_domain(mut self, domain: impl Fn(&Matrix) -> bool + 'a) -> Self {
        self.domain = Box::new(domain);
        self
    }

    fn guard(&self, k: &Matrix) -> Result<()> {
        if k.shape() != self.shape {
            return Err(Error::Dimension(format!("argument is {:?}, expected {:?}", k.shape(), self.shape)));
        }
        if !(self.domain)(k) {
            return Err(Error::LeftFeasibleSet { gain: k.clone() });
        }
        Ok(())
    }
}

impl SmoothOracle for FnOracle<'_> {
    fn shape(&self) -> (usize, usize) {
        self.shape
    }
    fn in_domain(&self, k: &Matrix) -> bool {
        k.shape() == self.shape && (self.domain)(k)
    }
    fn value(&self, k: &Matrix) -> Result<f64> {
        Counters::bump(&self.counters.value, 1);
        self.guard(k)?;
        Ok((self.value)(k))
    }
    fn gradient(&self, k: &Matrix) -> Result<Matrix> {
        Counters::bump(&self.counters.gradient, 1);
        self.guard(k)?;
        Ok((self.gradient)(k))
    }
    fn hvp(&self, k: &Matrix, e: &Matrix) -> Result<Matrix> {
        Counters::bump(&self.counters.hvp, 1);
        self.guard(k)?;
        Ok((self.hvp)(k, e))
    }
    fn counts(&self) -> OracleCounts {
        self.counters.snapshot()
    }
}

/// `ψ(K) + L1·([‖K − K̂‖_F − α/L2]_+)²`.
pub struct Penalized<'a> {
    base: &'a dyn SmoothOracle,
    center: Matrix,
    l1: f64,
    radius: f64,
}

/// Adds the convex penalty that vanishes on the ball of radius `alpha/l2` around `k_hat`.
pub fn build_penalized<'a>(f: &'a dyn SmoothOracle, k_hat: &Matrix, l1: f64, l2: f64, alpha: f64) -> Penalized<'a> {
    Penalized { base: f, center: k_hat.clone(), l1, radius: alpha / l2 }
}

impl Penalized<'_> {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn penalty(&self, k: &Matrix) -> f64 {
        let excess = ((k - &self.center).norm() - self.radius).max(0.0);
        self.l1 * excess * excess
    }

    pub fn penalty_gradient(&self, k: &Matrix) -> Matrix {
        let d = k - &self.center;
        let dn = d.norm();
        if dn <= self.radius {
            return Matrix::zeros(d.nrows(), d.ncols());
        }
        d * (2.0 * self.l1 * (1.0 - self.radius / dn))
    }

    pub fn penalty_hvp(&self, k: &Matrix, e: &Matrix) -> Matrix {
        let d = k - &self.center;
        let dn = d.norm();
        if dn <= self.radius {
            return Matrix::zeros(d.nrows(), d.ncols());
        }
        let r = self.radius;
        (e * (1.0 - r / dn) + &d * (r / dn.powi(3) * d.dot(e))) * (2.0 * self.l1)
    }
}

impl SmoothOracle for Penalized<'_> {
    fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }
    fn in_domain(&self, k: &Matrix) -> bool {
        self.base.in_domain(k)
    }
    fn value(&self, k: &Matrix) -> Result<f64> {
        Ok(self.base.value(k)? + self.penalty(k))
    }
    fn gradient(&self, k: &Matrix) -> Result<Matrix> {
        Ok(self.base.gradient(k)? + self.penalty_gradient(k))
    }
    fn value_and_gradient(&self, k: &Matrix) -> Result<(f64, Matrix)> {
        let (v, g) = self.base.value_and_gradient(k)?;
        Ok((v + self.penalty(k), g + self.penalty_gradient(k)))
    }
    fn hvp(&self, k: &Matrix, e: &Matrix) -> Result<Matrix> {
        Ok(self.base.hvp(k, e)? + self.penalty_hvp(k, e))
    }
    fn counts(&self) -> OracleCounts {
        self.base.counts()
    }
}

/// `ψ(K) + γ‖K − center‖_F²`.
pub struct Regularized<'a> {
    base: &'a dyn SmoothOracle,
    center: Matrix,
    gamma: f64,
}

impl<'a> Regularized<'a> {
    pub fn new(base: &'a dyn SmoothOracle, center: &Matrix, gamma: f64) -> Self {
        Self { base, center: center.clone(), gamma }
    }
}

impl SmoothOracle for Regularized<'_> {
    fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }
    fn in_domain(&self, k: &Matrix) -> bool {
        self.base.in_domain(k)
    }
    fn value(&self, k: &Matrix) -> Result<f64> {
        Ok(self.base.value(k)? + self.gamma * (k - &self.center).norm_squared())
    }
    fn gradient(&self, k: &Matrix) -> Result<Matrix> {
        Ok(self.base.gradient(k)? + (k - &self.center) * (2.0 * self.gamma))
    }
    fn value_and_gradient(&self, k: &Matrix) -> Result<(f64, Matrix)> {
        let (v, g) = self.base.value_and_gradient(k)?;
        let d = k - &self.center;
        Ok((v + self.gamma * d.norm_squared(), g + d * (2.0 * self.gamma)))
    }
    fn hvp(&self, k: &Matrix, e: &Matrix) -> Result<Matrix> {
        Ok(self.base.hvp(k, e)? + e * (2.0 * self.gamma))
    }
    fn counts(&self) -> OracleCounts {
        self.base.counts()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn zero_oracle() -> FnOracle<'static> {
        FnOracle::new((1, 2), |_| 0.0, |k| Matrix::zeros(k.nrows(), k.ncols()), |k, _| Matrix::zeros(k.nrows(), k.ncols()))
    }

    #[test]
    fn penalty_dead_zone_and_value() {
        let base = zero_oracle();
        let (l1, l2, alpha) = (3.0, 2.0, 0.5);
        let k_hat = dmatrix![1.0, -1.0];
        let pen = build_penalized(&base, &k_hat, l1, l2, alpha);
        let inside = &k_hat + dmatrix![0.1, 0.1];
        assert_eq!(pen.value(&inside).unwrap(), 0.0);
        assert_eq!(pen.gradient(&inside).unwrap(), Matrix::zeros(1, 2));
        // ‖D‖ = 2α/L2 gives L1·(α/L2)²
        let r = alpha / l2;
        let outside = &k_hat + dmatrix![2.0 * r, 0.0];
        assert!((pen.value(&outside).unwrap() - l1 * r * r).abs() < 1e-15);
    }

    #[test]
    fn penalty_derivatives_match_differences() {
        let base = zero_oracle();
        let pen = build_penalized(&base, &dmatrix![0.2, 0.3], 2.0, 4.0, 1.0);
        let k = dmatrix![1.1, -0.7];
        let g = pen.gradient(&k).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut e = Matrix::zeros(1, 2);
            e[(0, j)] = h;
            let fd = (pen.value(&(&k + &e)).unwrap() - pen.value(&(&k - &e)).unwrap()) / (2.0 * h);
            assert!((fd - g[(0, j)]).abs() <= 1e-8 * (1.0 + fd.abs()));
        }
        let e = dmatrix![0.3, -0.9];
        let fd = (pen.gradient(&(&k + &e * h)).unwrap() - pen.gradient(&(&k - &e * h)).unwrap()) / (2.0 * h);
        assert!((fd - pen.hvp(&k, &e).unwrap()).norm() < 1e-7);
    }

    #[test]
    fn regularization_adds_curvature() {
        let base = zero_oracle();
        let reg = Regularized::new(&base, &dmatrix![1.0, 2.0], 0.5);
        assert_eq!(reg.value(&dmatrix![2.0, 2.0]).unwrap(), 0.5);
        assert_eq!(reg.gradient(&dmatrix![2.0, 2.0]).unwrap(), dmatrix![1.0, 0.0]);
        assert_eq!(reg.hvp(&dmatrix![2.0, 2.0], &dmatrix![1.0, 1.0]).unwrap(), dmatrix![1.0, 1.0]);
    }

    #[test]
    fn lqr_objective_guards_its_domain() {
        let one = dmatrix![1.0];
        let p = LqrProblem::new(dmatrix![0.0], one.clone(), one.clone(), one.clone(), one.clone(), one).unwrap();
        let f = LqrObjective::new(&p).with_bound(1.25);
        assert!(f.in_domain(&dmatrix![1.0]));
        assert!(!f.in_domain(&dmatrix![3.0]));
        assert!(matches!(f.value(&dmatrix![-1.0]), Err(Error::LeftFeasibleSet { .. })));
        assert!(matches!(f.gradient(&dmatrix![3.0]), Err(Error::LeftFeasibleSet { .. })));
        let exact = f.hvp(&dmatrix![1.0], &dmatrix![1.0]).unwrap();
        let fd = LqrObjective::new(&p).with_hvp_mode(HvpMode::FiniteDifference).hvp(&dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((exact[(0, 0)] - fd[(0, 0)]).abs() < 1e-6);
        assert_eq!(f.counts().hvp, 1);
    }

    #[test]
    fn fd_hvp_at_sublevel_boundary() {
        let p = crate::harness::gen_olqr_chain(3).unwrap();
        let k = dmatrix![1.0];
        let f = crate::lqr::cost(&p, &k).unwrap();
        let e = dmatrix![1.0];
        let exact = LqrObjective::new(&p).with_bound(f).hvp(&k, &e).unwrap();
        for dir in [1.0, -1.0] {
            let fd = LqrObjective::new(&p).with_bound(f).with_hvp_mode(HvpMode::FiniteDifference).hvp(&k, &(&e * dir)).unwrap();
            assert!((fd[(0, 0)] - dir * exact[(0, 0)]).abs() < 1e-5 * exact.norm());
        }
    }
}
