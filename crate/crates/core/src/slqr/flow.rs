use std::time::Instant;

use crate::lqr::{Evaluation, LqrProblem};
use crate::trace::{elapsed_ms, Extra, Status, Trace, TraceKind, TraceRow};
use crate::{Error, Gain, Matrix, Result};

use super::AccelConfig;

struct Stage {
    f: f64,
    grad: Matrix,
}

fn stage(p: &LqrProblem, k: &Matrix, solves: &mut u64) -> Result<Stage> {
    let ev = Evaluation::new(p, k)?;
    let grad = ev.gradient()?;
    *solves += ev.lyap_solves();
    Ok(Stage { f: ev.cost(), grad })
}

/// Right-hand side `(K̇, V̇) = (V, −2dV − ∇f(K + βV))`.
fn vector_field(p: &LqrProblem, k: &Matrix, v: &Matrix, cfg: &AccelConfig, solves: &mut u64) -> Result<(Matrix, Matrix)> {
    let g = stage(p, &(k + v * cfg.beta), solves)?.grad;
    Ok((v.clone(), -(v * (2.0 * cfg.d)) - g))
}

/// Integrates the damped momentum flow with classical RK4.
///
/// After each step, if `f(K) ≥ alpha1` and `⟨∇f(K), K̇⟩ ≥ 0` the velocity is
/// reset to `−η∇f(K)`. Every row records the energy `½‖K̇‖² + f − f*`
/// (with `f* = 0` when unknown) and `⟨∇f, K̇⟩` after any jump.
pub fn simulate_hybrid_flow(
    p: &LqrProblem,
    k0: &Matrix,
    v0: &Matrix,
    cfg: &AccelConfig,
    horizon: f64,
    dt: f64,
) -> Result<Trace> {
    cfg.validate()?;
    p.check_gain(v0)?;
    if !(dt > 0.0) || dt > 1e-3_f64.min(cfg.t / 10.0) * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!("dt must lie in (0, min(1e-3, T/10)], got {dt}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidConfig(format!("horizon must be non-negative, got {horizon}")));
    }
    let start = Instant::now();
    let f_star = cfg.f_star.unwrap_or(0.0);
    let mut trace = Trace::new(TraceKind::Flow, "hybrid");
    trace.push_meta("config", serde_json::to_string(cfg)?);
    trace.push_meta("horizon", horizon.to_string());
    trace.push_meta("dt", dt.to_string());

    let mut solves = 0u64;
    let mut k = k0.clone();
    let mut v = v0.clone();
    let mut here = stage(p, &k, &mut solves)?;
    let mut jumps = 0usize;
    let steps = (horizon / dt).round() as u64;

    let row = |iter: u64, time: f64, s: &Stage, v: &Matrix, jump: bool, solves: u64| TraceRow {
        iter,
        f: s.f,
        grad_norm: s.grad.norm(),
        restart: jump,
        wall_ms: elapsed_ms(start),
        lyap_solves: solves,
        extra: Extra::Flow { time, energy: 0.5 * v.norm_squared() + s.f - f_star, dfdt: s.grad.dot(v) },
    };
    trace.rows.push(row(0, 0.0, &here, &v, false, solves));

    trace.status = 'outer: {
        for i in 1..=steps {
            let rk = (|| -> Result<(Matrix, Matrix)> {
                let (k1, v1) = vector_field(p, &k, &v, cfg, &mut solves)?;
                let (k2, v2) = vector_field(p, &(&k + &k1 * (dt / 2.0)), &(&v + &v1 * (dt / 2.0)), cfg, &mut solves)?;
                let (k3, v3) = vector_field(p, &(&k + &k2 * (dt / 2.0)), &(&v + &v2 * (dt / 2.0)), cfg, &mut solves)?;
                let (k4, v4) = vector_field(p, &(&k + &k3 * dt), &(&v + &v3 * dt), cfg, &mut solves)?;
                Ok((
                    &k + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0),
                    &v + (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0),
                ))
            })();
            let (k_next, v_next) = match rk {
                Ok(kv) => kv,
                Err(Error::NotStabilizing) => break 'outer Status::LeftFeasibleSet,
                Err(e) => return Err(e),
            };
            if !k_next.iter().chain(v_next.iter()).all(|x| x.is_finite()) {
                return Err(Error::NonFiniteValue("flow state"));
            }
            here = match stage(p, &k_next, &mut solves) {
                Ok(s) => s,
                Err(Error::NotStabilizing) => break 'outer Status::LeftFeasibleSet,
                Err(e) => return Err(e),
            };
            k = k_next;
            v = v_next;
            let jump = here.f >= cfg.alpha1 && here.grad.dot(&v) >= 0.0;
            if jump {
                v = &here.grad * (-cfg.eta);
                jumps += 1;
            }
            trace.rows.push(row(i, i as f64 * dt, &here, &v, jump, solves));
            if jumps > cfg.max_restarts {
                break 'outer Status::JumpBudgetExceeded;
            }
        }
        Status::Converged
    };
    trace.push_meta("jumps", jumps.to_string());
    trace.final_gain = Some(Gain::new(k)?);
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

    fn flow_cfg(alpha1: f64) -> AccelConfig {
        AccelConfig {
            t: 0.1,
            d: 0.5,
            beta: 0.0,
            eta: 0.2,
            alpha1,
            max_restarts: 20,
            max_iters: 0,
            grad_tol: 0.0,
            f_target: None,
            f_star: Some(1.0),
            time_limit_s: None,
        }
    }

    fn energies(t: &Trace) -> Vec<f64> {
        t.rows
            .iter()
            .map(|r| match r.extra {
                Extra::Flow { energy, .. } => energy,
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn equilibrium_is_stationary() {
        let t = simulate_hybrid_flow(&scalar(), &dmatrix![1.0], &dmatrix![0.0], &flow_cfg(1.25), 0.1, 1e-3).unwrap();
        assert!(energies(&t).iter().all(|e| e.abs() < 1e-14));
        assert_eq!(t.restarts(), 0);
    }

    #[test]
    fn energy_decays_without_jumps() {
        let t = simulate_hybrid_flow(&scalar(), &dmatrix![2.0], &dmatrix![0.0], &flow_cfg(1.25), 2.0, 1e-3).unwrap();
        assert_eq!(t.restarts(), 0);
        let e = energies(&t);
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-6 * 1e-3));
        assert!(e.last().unwrap() < &e[0]);
    }

    #[test]
    fn large_momentum_triggers_a_jump() {
        let cfg = flow_cfg(1.25);
        let t = simulate_hybrid_flow(&scalar(), &dmatrix![2.0], &dmatrix![3.0], &cfg, 0.5, 1e-3).unwrap();
        let jump = t.rows.iter().find(|r| r.restart).expect("a jump");
        if let Extra::Flow { dfdt, .. } = jump.extra {
            let expected = -cfg.eta * jump.grad_norm * jump.grad_norm;
            assert!((dfdt - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn rejects_coarse_dt() {
        assert!(simulate_hybrid_flow(&scalar(), &dmatrix![2.0], &dmatrix![0.0], &flow_cfg(1.25), 1.0, 0.05).is_err());
    }
}
