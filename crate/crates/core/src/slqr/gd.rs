use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::lqr::{constants, cost, Evaluation, LqrProblem};
use crate::trace::{elapsed_ms, Extra, Status, Trace, TraceKind, TraceRow};
use crate::{Error, Gain, Matrix, Result};

/// Plain gradient descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub step: f64,
    pub grad_tol: f64,
    pub max_iters: u64,
    /// Stop once `f ≤ f_target`.
    pub f_target: Option<f64>,
    /// Wall-clock budget in seconds.
    pub time_limit_s: Option<f64>,
}

impl GdConfig {
    pub fn new(step: f64, grad_tol: f64, max_iters: u64) -> Self {
        Self { step, grad_tol, max_iters, f_target: None, time_limit_s: None }
    }

    /// Step `1 / L1(f(K0))`.
    pub fn default_for(p: &LqrProblem, k0: &Matrix) -> Result<Self> {
        let l1 = constants(p, cost(p, k0)?, None)?.l1;
        Ok(Self::new(1.0 / l1, 1e-6, 100_000))
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("grad_tol must be non-negative, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// `K ← K − step·∇f(K)` until the gradient norm drops to `grad_tol`.
pub fn gd_solve(p: &LqrProblem, k0: &Matrix, cfg: &GdConfig) -> Result<Trace> {
    cfg.validate()?;
    let start = Instant::now();
    let mut trace = Trace::new(TraceKind::Slqr, "gd");
    trace.push_meta("config", serde_json::to_string(cfg)?);

    let mut k = k0.clone();
    let mut ev = Evaluation::new(p, &k)?;
    let mut g = ev.gradient()?;
    let mut solves = ev.lyap_solves();
    let mut iter = 0u64;
    let row = |iter, f: f64, g: &Matrix, solves| TraceRow {
        iter,
        f,
        grad_norm: g.norm(),
        restart: false,
        wall_ms: elapsed_ms(start),
        lyap_solves: solves,
        extra: Extra::None,
    };
    trace.rows.push(row(0, ev.cost(), &g, solves));

    trace.status = loop {
        let f = ev.cost();
        if g.norm() <= cfg.grad_tol || cfg.f_target.is_some_and(|t| f <= t) {
            break Status::Converged;
        }
        if iter >= cfg.max_iters {
            break Status::MaxIters;
        }
        if cfg.time_limit_s.is_some_and(|s| start.elapsed().as_secs_f64() > s) {
            break Status::TimeLimit;
        }
        let k_next = &k - &g * cfg.step;
        let next = match Evaluation::new(p, &k_next) {
            Ok(e) => e,
            Err(Error::NotStabilizing) => return Err(Error::StepRejected { iter }),
            Err(e) => return Err(e),
        };
        g = next.gradient()?;
        solves += next.lyap_solves();
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteValue("gradient"));
        }
        k = k_next;
        ev = next;
        iter += 1;
        trace.rows.push(row(iter, ev.cost(), &g, solves));
    };
    trace.final_gain = Some(Gain::new(k)?);
    Ok(trace)
}
