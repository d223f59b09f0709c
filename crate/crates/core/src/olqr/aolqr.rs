use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ncd::{derive_seed, ncd, NcdConfig};
use super::oracle::{build_penalized, HvpMode, LqrObjective, OracleCounts, SmoothOracle};
use super::snag::semiconvex_nag;
use crate::lqr::{constants, cost, LqrProblem};
use crate::trace::{elapsed_ms, Extra, Phase, Status, Trace, TraceKind, TraceRow};
use crate::{Error, Gain, Matrix, Result};

/// Parameters of [`a_olqr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AOlqrConfig {
    /// Target gradient norm.
    pub eps: f64,
    /// Smoothness bound on the working sublevel set.
    pub l1: f64,
    /// Hessian Lipschitz bound on the working sublevel set.
    pub l2: f64,
    /// Curvature threshold.
    pub alpha: f64,
    /// Upper bound on `f(K1) − inf f`.
    pub delta_f: f64,
    /// Failure probability of the eigen-probes.
    pub delta: f64,
    pub max_nag_restarts: usize,
    pub seed: u64,
    pub hvp_mode: HvpMode,
    /// Run even when `eps` or `alpha` violate the parameter hypotheses.
    pub allow_hypothesis_violation: bool,
}

impl AOlqrConfig {
    /// Constants evaluated at `f(K1)`, `alpha = √(L2·eps)`, `Δ_f = f(K1)`.
    pub fn from_problem(p: &LqrProblem, k1: &Matrix, eps: f64) -> Result<Self> {
        let f1 = cost(p, k1)?;
        let c = constants(p, f1, None)?;
        Ok(Self {
            eps,
            l1: c.l1,
            l2: c.l2,
            alpha: (c.l2 * eps).sqrt(),
            delta_f: f1,
            delta: 0.05,
            max_nag_restarts: 20,
            seed: 0,
            hvp_mode: HvpMode::Exact,
            allow_hypothesis_violation: false,
        })
    }

    /// Outer budget `⌈1 + Δ_f(12L2²/α³ + √10·L2/(α·ε))⌉`.
    pub fn outer_budget(&self) -> u64 {
        let xi = 1.0 + self.delta_f * (12.0 * self.l2 * self.l2 / self.alpha.powi(3) + 10f64.sqrt() * self.l2 / (self.alpha * self.eps));
        xi.ceil().min(u64::MAX as f64) as u64
    }

    /// Outer iteration bound `18 Δ_f √L2 ε^{−3/2}`.
    pub fn outer_iteration_bound(&self) -> f64 {
        18.0 * self.delta_f * self.l2.sqrt() * self.eps.powf(-1.5)
    }

    /// Violated hypotheses, empty when all hold.
    pub fn hypothesis_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let eps_max = (self.delta_f.powf(2.0 / 3.0) * self.l2.cbrt()).min(self.l1 * self.l1 / self.l2);
        if !(self.eps > 0.0 && self.eps <= eps_max) {
            out.push(format!("eps = {} outside (0, {eps_max}]", self.eps));
        }
        if !(self.alpha > 0.0 && self.alpha <= self.l1) {
            out.push(format!("alpha = {} outside (0, L1 = {}]", self.alpha, self.l1));
        }
        out
    }

    fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [("eps", self.eps), ("L1", self.l1), ("L2", self.l2), ("alpha", self.alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.delta_f >= 0.0) {
            return Err(Error::InvalidConfig(format!("delta_f must be non-negative, got {}", self.delta_f)));
        }
        let violations = self.hypothesis_violations();
        if !violations.is_empty() && !self.allow_hypothesis_violation {
            return Err(Error::InvalidConfig(violations.join("; ")));
        }
        Ok(violations)
    }
}

/// Result of [`a_olqr`].
#[derive(Debug, Clone)]
pub struct AOlqrOutcome {
    pub gain: Gain,
    pub trace: Trace,
    pub outer_iterations: u64,
    pub counts: OracleCounts,
    pub ncd_steps: u64,
    pub nag_restarts: u64,
    /// Outer budget `Ξ`.
    pub budget: u64,
}

/// Alternates negative curvature descent on `f` with Semiconvex-NAG on the
/// penalized `f + L1([‖K − K̂‖ − α/L2]_+)²` until `‖∇f‖ < ε` after an NCD pass.
pub fn a_olqr(p: &LqrProblem, k1: &Matrix, cfg: &AOlqrConfig) -> Result<AOlqrOutcome> {
    let warnings = cfg.validate()?;
    let start = Instant::now();
    let f1 = cost(p, k1)?;
    let f = LqrObjective::new(p).with_bound(f1).with_hvp_mode(cfg.hvp_mode);
    let budget = cfg.outer_budget();
    let delta_probe = cfg.delta / budget as f64;

    let mut trace = Trace::new(TraceKind::Olqr, "a-olqr");
    trace.push_meta("config", serde_json::to_string(cfg)?);
    trace.push_meta("sublevel_bound", crate::lqr::fmt_f64(f1));
    trace.push_meta("outer_budget", budget.to_string());
    for w in &warnings {
        trace.push_meta("warning", w.clone());
    }

    let mut k = k1.clone();
    let mut ncd_steps = 0u64;
    let mut nag_restarts = 0u64;
    let mut row_iter = 0u64;
    let mut outer = 0u64;
    let mut push = |trace: &mut Trace, f_val: f64, g: f64, phase, eig: f64, restart: bool, ncd_steps, nag_restarts, counts: OracleCounts| {
        trace.rows.push(TraceRow {
            iter: row_iter,
            f: f_val,
            grad_norm: g,
            restart,
            wall_ms: elapsed_ms(start),
            lyap_solves: counts.lyap_solves,
            extra: Extra::Olqr { phase, min_eig_est: eig, ncd_steps, nag_restarts },
        });
        row_iter += 1;
    };

    loop {
        let ncd_cfg = NcdConfig {
            delta: delta_probe,
            l1: cfg.l1,
            l2: cfg.l2,
            alpha: cfg.alpha,
            delta_f: cfg.delta_f,
            seed: derive_seed(cfg.seed, outer),
        };
        let nc = ncd(&f, &k, &ncd_cfg)?;
        ncd_steps += nc.steps.len() as u64;
        let k_hat = nc.gain;
        let (f_hat, g_hat) = f.value_and_gradient(&k_hat)?;
        let g_norm = g_hat.norm();
        push(&mut trace, f_hat, g_norm, Phase::Ncd, nc.last_estimate, false, ncd_steps, nag_restarts, f.counts());
        if g_norm < cfg.eps {
            trace.status = Status::Converged;
            trace.final_gain = Some(Gain::new(k_hat.clone())?);
            return Ok(AOlqrOutcome {
                gain: Gain::new(k_hat)?,
                trace,
                outer_iterations: outer,
                counts: f.counts(),
                ncd_steps,
                nag_restarts,
                budget,
            });
        }
        outer += 1;
        if outer > budget {
            return Err(Error::IterationBudgetExceeded { routine: "a_olqr", limit: budget });
        }
        let f_k = build_penalized(&f, &k_hat, cfg.l1, cfg.l2, cfg.alpha);
        let sn = semiconvex_nag(&f_k, &k_hat, cfg.eps / 2.0, 3.0 * cfg.l1, 3.0 * cfg.alpha, cfg.max_nag_restarts)?;
        nag_restarts += sn.nag_restarts as u64;
        k = sn.gain;
        let (f_next, g_next) = f.value_and_gradient(&k)?;
        push(&mut trace, f_next, g_next.norm(), Phase::Snag, f64::NAN, sn.nag_restarts > 0, ncd_steps, nag_restarts, f.counts());
    }
}
