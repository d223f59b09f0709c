use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{gen_integrator_chain, gen_olqr_chain, gen_random_medium};
use crate::lqr::{care_oracle, care_solve, constants, cost, is_stabilizing, ConstantsBundle, Kind, LqrProblem};
use crate::olqr::{a_olqr, AOlqrConfig, HvpMode};
use crate::slqr::{accel_solve, gd_solve, simulate_hybrid_flow, AccelConfig, GdConfig};
use crate::trace::{Extra, Status, Trace, TraceKind, TraceRow};
use crate::{Error, Gain, Matrix, Result};

/// Named problem generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorName {
    IntegratorChain,
    RandomMedium,
    OlqrChain,
}

impl FromStr for GeneratorName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| Error::Parse(format!("unknown generator {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ProblemSource {
    File {
        path: PathBuf,
    },
    Generator {
        name: GeneratorName,
        n: usize,
        #[serde(default = "one")]
        m: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> usize {
    1
}

impl ProblemSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemSource::File { path } if !path.is_file() => {
                Err(Error::InvalidConfig(format!("problem file {} does not exist", path.display())))
            }
            ProblemSource::Generator { n: 0, .. } | ProblemSource::Generator { m: 0, .. } => {
                Err(Error::InvalidConfig("generator dimensions must be positive".into()))
            }
            ProblemSource::Generator { name, m, .. } if *name != GeneratorName::RandomMedium && *m != 1 => {
                Err(Error::InvalidConfig(format!("{name:?} has a single input, got m = {m}")))
            }
            _ => Ok(()),
        }
    }

    pub fn load(&self) -> Result<LqrProblem> {
        self.validate()?;
        match *self {
            ProblemSource::File { ref path } => LqrProblem::load(path),
            ProblemSource::Generator { name: GeneratorName::IntegratorChain, n, .. } => gen_integrator_chain(n),
            ProblemSource::Generator { name: GeneratorName::OlqrChain, n, .. } => gen_olqr_chain(n),
            ProblemSource::Generator { name: GeneratorName::RandomMedium, n, m, seed } => gen_random_medium(n, m, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Gd,
    Accel,
    Hybrid,
    AOlqr,
    CareOracle,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [SolverKind::Gd, SolverKind::Accel, SolverKind::Hybrid, SolverKind::AOlqr, SolverKind::CareOracle];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Gd => "gd",
            SolverKind::Accel => "accel",
            SolverKind::Hybrid => "hybrid",
            SolverKind::AOlqr => "a-olqr",
            SolverKind::CareOracle => "care-oracle",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Parse(format!("unknown solver {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdSettings {
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelSettings {
    pub t: Option<f64>,
    pub d: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub alpha1: Option<f64>,
    pub max_restarts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSettings {
    pub horizon: f64,
    /// Defaults to `min(1e-3, T/10)`.
    pub dt: Option<f64>,
}

impl Default for HybridSettings {
    fn default() -> Self {
        Self { horizon: 10.0, dt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AOlqrSettings {
    pub eps: f64,
    pub alpha: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub delta: Option<f64>,
    pub delta_f: Option<f64>,
    pub max_nag_restarts: Option<usize>,
    pub hvp_mode: HvpMode,
    pub allow_hypothesis_violation: bool,
}

impl Default for AOlqrSettings {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            alpha: None,
            l1: None,
            l2: None,
            delta: None,
            delta_f: None,
            max_nag_restarts: None,
            hvp_mode: HvpMode::Exact,
            allow_hypothesis_violation: false,
        }
    }
}

/// Settings shared by every solver plus one block per solver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub grad_tol: Option<f64>,
    pub max_iters: Option<u64>,
    pub time_limit_s: Option<f64>,
    /// Optimal cost; computed by the Riccati oracle for state feedback when absent.
    pub f_star: Option<f64>,
    /// Stop once `f − f* ≤ gap`.
    pub f_target_gap: Option<f64>,
    /// Gradient steps run before the momentum solvers start.
    pub warm_start_gd: Option<u64>,
    pub gd: GdSettings,
    pub accel: AccelSettings,
    pub hybrid: HybridSettings,
    pub a_olqr: AOlqrSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    /// Initial gain as rows; the zero gain when absent.
    #[serde(default)]
    pub initial_gain: Option<Gain>,
    #[serde(default)]
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub settings: SolverSettings,
    pub output_dir: PathBuf,
    /// Explicit seeds; `0..repeats` when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub repeats: usize,
    /// Write the `wall_ms` column; disable for byte-reproducible traces.
    #[serde(default = "yes")]
    pub timing: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSource, solvers: Vec<SolverKind>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            problem,
            initial_gain: None,
            solvers,
            settings: SolverSettings::default(),
            output_dir: output_dir.into(),
            seeds: Vec::new(),
            repeats: 1,
            timing: true,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn effective_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Loads the problem and the initial gain, checking both.
    pub fn prepare(&self) -> Result<(LqrProblem, Matrix)> {
        let p = self.problem.load()?;
        let k0 = match &self.initial_gain {
            Some(g) => g.matrix().clone(),
            None => p.zero_gain().into_matrix(),
        };
        p.check_gain(&k0)?;
        if !is_stabilizing(&p, &k0) {
            return Err(Error::InvalidConfig("initial gain is not stabilizing".into()));
        }
        Ok((p, k0))
    }
}

fn optimal_cost(p: &LqrProblem, k0: &Matrix, s: &SolverSettings) -> Result<Option<f64>> {
    match s.f_star {
        Some(v) => Ok(Some(v)),
        None if p.kind() == Kind::Slqr => Ok(Some(cost(p, care_oracle(p, k0)?.matrix())?)),
        None => Ok(None),
    }
}

fn f_target(p: &LqrProblem, k0: &Matrix, s: &SolverSettings) -> Result<Option<f64>> {
    match s.f_target_gap {
        None => Ok(None),
        Some(gap) => match optimal_cost(p, k0, s)? {
            Some(fs) => Ok(Some(fs + gap)),
            None => Err(Error::InvalidConfig("f_target_gap needs f_star for output feedback".into())),
        },
    }
}

/// Gradient descent configuration after applying the overrides.
pub fn gd_config(p: &LqrProblem, k0: &Matrix, s: &SolverSettings) -> Result<GdConfig> {
    let mut cfg = GdConfig::default_for(p, k0)?;
    if let Some(step) = s.gd.step {
        cfg.step = step;
    }
    if let Some(tol) = s.grad_tol {
        cfg.grad_tol = tol;
    }
    if let Some(n) = s.max_iters {
        cfg.max_iters = n;
    }
    cfg.f_target = f_target(p, k0, s)?;
    cfg.time_limit_s = s.time_limit_s;
    Ok(cfg)
}

/// Momentum configuration after applying the overrides.
pub fn accel_config(p: &LqrProblem, k0: &Matrix, s: &SolverSettings) -> Result<AccelConfig> {
    let mut cfg = AccelConfig::defaults(p, k0, s.f_star)?;
    let a = &s.accel;
    cfg.t = a.t.unwrap_or(cfg.t);
    cfg.d = a.d.unwrap_or(cfg.d);
    cfg.beta = a.beta.unwrap_or(cfg.beta);
    cfg.eta = a.eta.unwrap_or(cfg.eta);
    cfg.alpha1 = a.alpha1.unwrap_or(cfg.alpha1);
    cfg.max_restarts = a.max_restarts.unwrap_or(cfg.max_restarts);
    cfg.grad_tol = s.grad_tol.unwrap_or(cfg.grad_tol);
    cfg.max_iters = s.max_iters.unwrap_or(cfg.max_iters);
    cfg.f_target = f_target(p, k0, s)?;
    cfg.time_limit_s = s.time_limit_s;
    Ok(cfg)
}

/// A-OLQR configuration after applying the overrides.
pub fn a_olqr_config(p: &LqrProblem, k0: &Matrix, s: &SolverSettings, seed: u64) -> Result<AOlqrConfig> {
    let o = &s.a_olqr;
    let mut cfg = AOlqrConfig::from_problem(p, k0, o.eps)?;
    cfg.l1 = o.l1.unwrap_or(cfg.l1);
    cfg.l2 = o.l2.unwrap_or(cfg.l2);
    cfg.alpha = o.alpha.unwrap_or((cfg.l2 * cfg.eps).sqrt());
    cfg.delta = o.delta.unwrap_or(cfg.delta);
    cfg.delta_f = o.delta_f.unwrap_or(cfg.delta_f);
    cfg.max_nag_restarts = o.max_nag_restarts.unwrap_or(cfg.max_nag_restarts);
    cfg.hvp_mode = o.hvp_mode;
    cfg.allow_hypothesis_violation = o.allow_hypothesis_violation;
    cfg.seed = seed;
    Ok(cfg)
}

fn warm_start(p: &LqrProblem, k0: &Matrix, s: &SolverSettings) -> Result<(Matrix, Option<u64>)> {
    let Some(iters) = s.warm_start_gd else {
        return Ok((k0.clone(), None));
    };
    let mut cfg = gd_config(p, k0, &SolverSettings { f_target_gap: None, ..s.clone() })?;
    cfg.max_iters = iters;
    let t = gd_solve(p, k0, &cfg)?;
    let k = t.final_gain.as_ref().map(|g| g.matrix().clone()).unwrap_or_else(|| k0.clone());
    Ok((k, t.last().map(|r| r.iter)))
}

fn care_trace(p: &LqrProblem, k0: &Matrix) -> Result<Trace> {
    let sol = care_solve(p, k0)?;
    let mut t = Trace::new(TraceKind::Slqr, SolverKind::CareOracle.name());
    let n = sol.costs.len();
    for (i, &f) in sol.costs.iter().enumerate() {
        t.rows.push(TraceRow {
            iter: i as u64,
            f,
            grad_norm: if i + 1 == n { sol.grad_norm } else { f64::NAN },
            restart: false,
            wall_ms: 0.0,
            lyap_solves: 0,
            extra: Extra::None,
        });
    }
    t.status = Status::Converged;
    t.final_gain = Some(sol.gain);
    Ok(t)
}

/// Runs one solver from `k0` and returns its trace.
pub fn run_solver(p: &LqrProblem, k0: &Matrix, kind: SolverKind, s: &SolverSettings, seed: u64) -> Result<Trace> {
    let mut trace = match kind {
        SolverKind::Gd => gd_solve(p, k0, &gd_config(p, k0, s)?)?,
        SolverKind::Accel | SolverKind::Hybrid => {
            let (k_start, warm) = warm_start(p, k0, s)?;
            let cfg = accel_config(p, &k_start, s)?;
            let mut t = if kind == SolverKind::Accel {
                accel_solve(p, &k_start, &cfg)?
            } else {
                let dt = s.hybrid.dt.unwrap_or(1e-3_f64.min(cfg.t / 10.0));
                let v0 = Matrix::zeros(k0.nrows(), k0.ncols());
                simulate_hybrid_flow(p, &k_start, &v0, &cfg, s.hybrid.horizon, dt)?
            };
            if let Some(w) = warm {
                t.push_meta("warm_start_gd_iters", w.to_string());
            }
            t
        }
        SolverKind::AOlqr => a_olqr(p, k0, &a_olqr_config(p, k0, s, seed)?)?.trace,
        SolverKind::CareOracle => care_trace(p, k0)?,
    };
    trace.push_meta("seed", seed.to_string());
    Ok(trace)
}

/// Summary of one `(solver, seed)` run. Numeric fields copy the last trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub solver: SolverKind,
    pub seed: u64,
    pub status: Option<Status>,
    pub error: Option<String>,
    pub final_f: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub iters: Option<u64>,
    pub restarts: Option<usize>,
    pub wall_ms: Option<f64>,
    pub lyap_solves: Option<u64>,
    pub trace_file: Option<String>,
}

impl RunSummary {
    fn failed(solver: SolverKind, seed: u64, err: &Error) -> Self {
        Self {
            solver,
            seed,
            status: None,
            error: Some(err.to_string()),
            final_f: None,
            final_grad_norm: None,
            iters: None,
            restarts: None,
            wall_ms: None,
            lyap_solves: None,
            trace_file: None,
        }
    }

    pub fn from_trace(solver: SolverKind, seed: u64, t: &Trace, trace_file: Option<String>) -> Self {
        let last = t.last();
        Self {
            solver,
            seed,
            status: Some(t.status),
            error: None,
            final_f: last.map(|r| r.f),
            final_grad_norm: last.map(|r| r.grad_norm).filter(|g| g.is_finite()),
            iters: last.map(|r| r.iter),
            restarts: Some(t.restarts()),
            wall_ms: last.map(|r| r.wall_ms),
            lyap_solves: last.map(|r| r.lyap_solves),
            trace_file,
        }
    }

    pub fn converged(&self) -> bool {
        self.status == Some(Status::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub solver: SolverKind,
    pub runs: usize,
    pub converged: usize,
    pub mean_iters: Option<f64>,
    pub best_f: Option<f64>,
    pub mean_wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    pub constants: Option<ConstantsBundle>,
    pub comparison: Vec<ComparisonRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl Report {
    pub fn from_runs(runs: Vec<RunSummary>, constants: Option<ConstantsBundle>) -> Self {
        let mut groups: BTreeMap<SolverKind, Vec<&RunSummary>> = BTreeMap::new();
        for r in &runs {
            groups.entry(r.solver).or_default().push(r);
        }
        let comparison = groups
            .into_iter()
            .map(|(solver, rs)| ComparisonRow {
                solver,
                runs: rs.len(),
                converged: rs.iter().filter(|r| r.converged()).count(),
                mean_iters: mean(rs.iter().filter_map(|r| r.iters).map(|i| i as f64)),
                best_f: rs.iter().filter_map(|r| r.final_f).reduce(f64::min),
                mean_wall_ms: mean(rs.iter().filter_map(|r| r.wall_ms)),
            })
            .collect();
        Self { runs, constants, comparison }
    }

    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(RunSummary::converged)
    }

    /// 0 when every run converged, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_converged() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs every `(solver, seed)` pair in parallel, writing `<solver>_seed<seed>.csv`
/// per run and `report.json` into the output directory.
///
/// Configuration problems are returned as errors; solver failures are
/// recorded in the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let (p, k0) = cfg.prepare()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let f_star = optimal_cost(&p, &k0, &cfg.settings).ok().flatten();
    let bundle = constants(&p, cost(&p, &k0)?, f_star).ok();

    let jobs: Vec<(SolverKind, u64)> =
        cfg.solvers.iter().flat_map(|&s| cfg.effective_seeds().into_iter().map(move |seed| (s, seed))).collect();
    let runs = jobs
        .into_par_iter()
        .map(|(solver, seed)| {
            let outcome = run_solver(&p, &k0, solver, &cfg.settings, seed).and_then(|t| {
                let t = if cfg.timing { t } else { t.without_timing() };
                let file = format!("{solver}_seed{seed}.csv");
                t.save(cfg.output_dir.join(&file))?;
                Ok(RunSummary::from_trace(solver, seed, &t, Some(file)))
            });
            outcome.unwrap_or_else(|e| RunSummary::failed(solver, seed, &e))
        })
        .collect();
    let report = Report::from_runs(runs, bundle);
    std::fs::write(cfg.output_dir.join("report.json"), report.to_json()?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            ProblemSource::Generator { name: GeneratorName::IntegratorChain, n: 3, m: 1, seed: 0 },
            vec![],
            std::env::temp_dir(),
        );
        cfg.initial_gain = Some(Gain::row(&[5.0, 100.0, 15.0]).unwrap());
        cfg
    }

    #[test]
    fn empty_solver_list() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = chain3();
        cfg.output_dir = dir.path().to_path_buf();
        let report = run_experiment(&cfg).unwrap();
        assert!(report.runs.is_empty());
        assert_eq!(report.exit_code(), 0);
        assert!(dir.path().join("report.json").is_file());
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = chain3();
        cfg.solvers = vec![SolverKind::Gd, SolverKind::AOlqr];
        cfg.settings.accel.t = Some(0.5);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"a-olqr\""));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_sources_rejected() {
        let bad = ProblemSource::File { path: "/nonexistent/problem.json".into() };
        assert!(bad.validate().is_err());
        let zero = ProblemSource::Generator { name: GeneratorName::RandomMedium, n: 0, m: 1, seed: 0 };
        assert!(zero.validate().is_err());
        let mut cfg = chain3();
        cfg.initial_gain = None;
        assert!(matches!(cfg.prepare(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn solver_names_parse() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("newton".parse::<SolverKind>().is_err());
    }

    #[test]
    fn care_trace_ends_at_optimum() {
        let (p, k0) = chain3().prepare().unwrap();
        let t = run_solver(&p, &k0, SolverKind::CareOracle, &SolverSettings::default(), 0).unwrap();
        assert_eq!(t.status, Status::Converged);
        assert!(t.last().unwrap().grad_norm <= 1e-9);
    }
}
