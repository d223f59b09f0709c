use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::lqr::{care_oracle, constants, cost, Evaluation, Kind, LqrProblem};
use crate::trace::{elapsed_ms, Extra, Status, Trace, TraceKind, TraceRow};
use crate::{Error, Gain, Matrix, Result};

/// Largest `T` keeping the restarted scheme well defined:
/// `(−η + √(η² + 8(1−2dη)/L1)) / (2(1−2dη))`.
pub fn max_step_bound(l1: f64, d: f64, eta: f64) -> Result<f64> {
    let c = 1.0 - 2.0 * d * eta;
    if !(c > 0.0) {
        return Err(Error::InvalidDamping { d, eta });
    }
    if !(l1 > 0.0) {
        return Err(Error::InvalidConfig(format!("smoothness constant must be positive, got {l1}")));
    }
    if eta == 0.0 {
        return Ok((2.0 / l1).sqrt());
    }
    Ok((-eta + (eta * eta + 8.0 * c / l1).sqrt()) / (2.0 * c))
}

/// Parameters of the semi-implicit Euler momentum scheme with restarting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelConfig {
    /// Step size.
    pub t: f64,
    /// Damping.
    pub d: f64,
    /// Gradient extrapolation.
    pub beta: f64,
    /// Momentum reset gain: after a restart `p = −eta·∇f(K)`.
    pub eta: f64,
    /// Sublevel threshold enforced by the restart rule.
    pub alpha1: f64,
    pub max_restarts: usize,
    pub max_iters: u64,
    pub grad_tol: f64,
    pub f_target: Option<f64>,
    /// Optimal cost used to derive the defaults and the flow energy.
    pub f_star: Option<f64>,
    pub time_limit_s: Option<f64>,
}

impl AccelConfig {
    /// Defaults: `alpha1 = f(K0)`, `eta = 1/L1(alpha1)`, `d = √L1/(√κ + 1)` and
    /// `T` at the step bound. Without `f_star` the optimum comes from the
    /// Riccati oracle, so output-feedback problems must supply it.
    pub fn defaults(p: &LqrProblem, k0: &Matrix, f_star: Option<f64>) -> Result<Self> {
        let alpha1 = cost(p, k0)?;
        let f_star = match f_star {
            Some(v) => v,
            None if p.kind() == Kind::Slqr => cost(p, care_oracle(p, k0)?.matrix())?,
            None => return Err(Error::InvalidConfig("damping needs an optimal cost estimate for output feedback".into())),
        };
        let c = constants(p, alpha1, Some(f_star))?;
        let kappa = c.kappa_cond.expect("f_star supplied");
        let eta = 1.0 / c.l1;
        let d = c.l1.sqrt() / (kappa.sqrt() + 1.0);
        let t = max_step_bound(c.l1, d, eta)?;
        Ok(Self {
            t,
            d,
            beta: 0.0,
            eta,
            alpha1,
            max_restarts: 20,
            max_iters: 100_000,
            grad_tol: 1e-6,
            f_target: None,
            f_star: Some(f_star),
            time_limit_s: None,
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad("step size T must be positive");
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return bad("damping d must be non-negative");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be non-negative");
        }
        if !self.beta.is_finite() || !self.alpha1.is_finite() {
            return bad("beta and alpha1 must be finite");
        }
        if self.f_star.is_some_and(|fs| self.alpha1 <= fs) {
            return bad("alpha1 must exceed the optimal cost");
        }
        if 1.0 - 2.0 * self.d * self.eta <= 0.0 {
            return Err(Error::InvalidDamping { d: self.d, eta: self.eta });
        }
        Ok(())
    }
}

/// Iterate of the momentum scheme, handed to observers after every accepted step.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: Matrix,
    pub p: Matrix,
    pub f: f64,
    pub iter: u64,
    pub restarts: usize,
}

/// Runs the scheme from zero momentum.
pub fn accel_solve(p: &LqrProblem, k0: &Matrix, cfg: &AccelConfig) -> Result<Trace> {
    let (m, r) = p.gain_shape();
    accel_solve_from(p, k0, &Matrix::zeros(m, r), cfg, |_| {})
}

/// `p ← (1−2dT)p − T∇f(K+βp)`, `K ← K + Tp`; a step ending above `alpha1`
/// is discarded and the state reset to `(K, −η∇f(K))`.
pub fn accel_solve_from(
    prob: &LqrProblem,
    k0: &Matrix,
    p0: &Matrix,
    cfg: &AccelConfig,
    mut observer: impl FnMut(&SolverState),
) -> Result<Trace> {
    cfg.validate()?;
    prob.check_gain(p0)?;
    let start = Instant::now();
    let mut trace = Trace::new(TraceKind::Slqr, "accel");
    trace.push_meta("config", serde_json::to_string(cfg)?);
    trace.push_meta("alpha1", crate::lqr::fmt_f64(cfg.alpha1));
    if cfg.beta != 0.0 {
        trace.push_meta("warning", "beta != 0: the restart guarantee assumes beta = 0");
    }

    let ev = Evaluation::new(prob, k0)?;
    if ev.cost() > cfg.alpha1 {
        return Err(Error::InvalidConfig(format!("f(K0) = {} exceeds alpha1 = {}", ev.cost(), cfg.alpha1)));
    }
    let mut grad = ev.gradient()?;
    let mut state = SolverState { k: k0.clone(), p: p0.clone(), f: ev.cost(), iter: 0, restarts: 0 };
    let mut solves = ev.lyap_solves();
    let mut attempts = 0u64;
    let mut pending_restart = false;
    let mut just_restarted = false;

    let push = |trace: &mut Trace, st: &SolverState, g: &Matrix, restart: bool, solves: u64| {
        trace.rows.push(TraceRow {
            iter: st.iter,
            f: st.f,
            grad_norm: g.norm(),
            restart,
            wall_ms: elapsed_ms(start),
            lyap_solves: solves,
            extra: Extra::None,
        })
    };
    push(&mut trace, &state, &grad, false, solves);
    observer(&state);

    trace.status = loop {
        if grad.norm() <= cfg.grad_tol || cfg.f_target.is_some_and(|t| state.f <= t) {
            break Status::Converged;
        }
        if attempts >= cfg.max_iters {
            break Status::MaxIters;
        }
        if cfg.time_limit_s.is_some_and(|s| start.elapsed().as_secs_f64() > s) {
            break Status::TimeLimit;
        }
        attempts += 1;

        let g_look = if cfg.beta == 0.0 {
            grad.clone()
        } else {
            match Evaluation::new(prob, &(&state.k + &state.p * cfg.beta)) {
                Ok(e) => {
                    solves += 2;
                    e.gradient()?
                }
                Err(Error::NotStabilizing) => break Status::LeftFeasibleSet,
                Err(e) => return Err(e),
            }
        };
        let p_next = &state.p * (1.0 - 2.0 * cfg.d * cfg.t) - g_look * cfg.t;
        let k_next = &state.k + &p_next * cfg.t;
        if !k_next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteValue("iterate"));
        }

        let accepted = match Evaluation::new(prob, &k_next) {
            Ok(e) => {
                solves += 1;
                (e.cost() <= cfg.alpha1).then_some(e)
            }
            Err(Error::NotStabilizing) => {
                if just_restarted {
                    trace.push_meta("left_feasible_set_at", state.iter.to_string());
                    break Status::LeftFeasibleSet;
                }
                None
            }
            Err(e) => return Err(e),
        };

        match accepted {
            Some(next) => {
                let g_next = next.gradient()?;
                solves += 1;
                if !g_next.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteValue("gradient"));
                }
                state.k = k_next;
                state.p = p_next;
                state.f = next.cost();
                state.iter += 1;
                grad = g_next;
                push(&mut trace, &state, &grad, pending_restart, solves);
                observer(&state);
                pending_restart = false;
                just_restarted = false;
            }
            None => {
                state.restarts += 1;
                if state.restarts > cfg.max_restarts {
                    break Status::RestartBudgetExceeded;
                }
                state.p = &grad * (-cfg.eta);
                pending_restart = true;
                just_restarted = true;
            }
        }
    };
    trace.push_meta("restarts", state.restarts.to_string());
    trace.push_meta("attempted_steps", attempts.to_string());
    trace.final_gain = Some(Gain::new(state.k)?);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar() -> LqrProblem {
        let one = dmatrix![1.0];
        LqrProblem::new(dmatrix![0.0], one.clone(), one.clone(), one.clone(), one.clone(), one).unwrap()
    }

    #[test]
    fn step_bound_values() {
        assert_eq!(max_step_bound(2.0, 0.3, 0.0).unwrap(), 1.0);
        let expected = (-0.5 + 3.85f64.sqrt()) / 1.8;
        assert!((max_step_bound(2.0, 0.1, 0.5).unwrap() - expected).abs() < 1e-15);
        assert!(matches!(max_step_bound(1.0, 1.0, 0.5), Err(Error::InvalidDamping { .. })));
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let b = max_step_bound(3.0, 0.2, i as f64 * 0.04).unwrap();
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn scalar_converges() {
        let p = scalar();
        let k0 = dmatrix![2.0];
        let cfg = AccelConfig { grad_tol: 1e-10, ..AccelConfig::defaults(&p, &k0, None).unwrap() };
        let t = accel_solve(&p, &k0, &cfg).unwrap();
        assert_eq!(t.status, Status::Converged, "{t:?}");
        assert!((t.final_gain.as_ref().unwrap()[(0, 0)] - 1.0).abs() < 1e-8);
        assert!(t.rows.iter().all(|r| r.f <= cfg.alpha1 + 1e-12));
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let p = scalar();
        let cfg = AccelConfig::defaults(&p, &dmatrix![1.5], None).unwrap();
        let t = accel_solve(&p, &dmatrix![1.0], &cfg).unwrap();
        assert_eq!(t.status, Status::Converged);
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn undamped_energy_is_nearly_conserved() {
        let p = scalar();
        let k0 = dmatrix![2.0];
        let cfg = AccelConfig {
            t: 1e-3,
            d: 0.0,
            beta: 0.0,
            eta: 0.0,
            alpha1: 1e6,
            max_restarts: 0,
            max_iters: 1000,
            grad_tol: 0.0,
            f_target: None,
            f_star: None,
            time_limit_s: None,
        };
        let mut energy = Vec::new();
        accel_solve_from(&p, &k0, &dmatrix![0.0], &cfg, |s| energy.push(0.5 * s.p.norm_squared() + s.f)).unwrap();
        assert_eq!(energy.len(), 1001);
        let drift = energy.iter().map(|e| (e - energy[0]).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-3, "drift {drift}");
    }
}
