use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lqr_accel::harness::{
    gen_integrator_chain, gen_olqr_chain, gen_random_medium, run_experiment, run_solver, ExperimentConfig, GeneratorName,
    SolverKind, SolverSettings,
};
use lqr_accel::lqr::{care_oracle, care_solve, constants, cost, is_stabilizing};
use lqr_accel::olqr::HvpMode;
use lqr_accel::{Error, Gain, Kind, LqrProblem, Matrix, Status};

#[derive(Parser)]
#[command(name = "lqr-accel", version, about = "Policy optimization for continuous-time LQR problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated problem as JSON.
    Gen {
        /// integrator-chain, random-medium or olqr-chain
        generator: GeneratorName,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the constants bundle for a sublevel value.
    Certify {
        #[arg(long)]
        problem: PathBuf,
        /// Sublevel value; defaults to the cost of the gain.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        gain: GainArg,
        /// Optimal cost; computed by the Riccati oracle for state feedback when omitted.
        #[arg(long)]
        f_star: Option<f64>,
    },
    /// Run one solver and write its trace CSV.
    Solve(SolveArgs),
    /// Run an experiment config and write traces plus report.json.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces the seed list (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<u64>,
        #[arg(long)]
        fd_hvp: bool,
        #[arg(long)]
        warm_start_gd: Option<u64>,
    },
    /// Solve the Riccati equation by Kleinman iteration (state feedback only).
    Oracle {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        gain: GainArg,
    },
}

#[derive(Args)]
struct GainArg {
    /// Stabilizing initial gain as JSON rows, e.g. '[[5,100,15]]'; zero when omitted.
    #[arg(long)]
    gain: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    /// gd, accel, hybrid, a-olqr or care-oracle
    #[arg(long)]
    solver: SolverKind,
    /// JSON file with solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gradient-norm tolerance (epsilon for a-olqr).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    /// Finite-difference Hessian-vector products in the eigen-probes.
    #[arg(long)]
    fd_hvp: bool,
    /// Gradient steps to run before accel or hybrid.
    #[arg(long)]
    warm_start_gd: Option<u64>,
    #[command(flatten)]
    gain: GainArg,
}

/// Exit code 2 for unusable input, 1 for a run that failed or did not converge.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension(_)
            | Error::InvalidProblem(_)
            | Error::InvalidAlpha(_)
            | Error::ZeroInput
            | Error::InvalidDamping { .. }
            | Error::InvalidConfig(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Json(_) => Failure::Config(e.into()),
            other => Failure::Run(other.into()),
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn load_problem(path: &PathBuf) -> Result<LqrProblem, Failure> {
    LqrProblem::load(path).with_context(|| format!("loading {}", path.display())).map_err(config_err)
}

fn initial_gain(p: &LqrProblem, arg: &GainArg) -> Result<Matrix, Failure> {
    let k = match &arg.gain {
        Some(text) => serde_json::from_str::<Gain>(text).context("parsing --gain").map_err(config_err)?.into_matrix(),
        None => p.zero_gain().into_matrix(),
    };
    p.check_gain(&k)?;
    if !is_stabilizing(p, &k) {
        return Err(config_err(anyhow::anyhow!("initial gain is not stabilizing; pass one with --gain")));
    }
    Ok(k)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(config_err),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(config_err),
    }
}

fn apply_overrides(s: &mut SolverSettings, tol: Option<f64>, max_iters: Option<u64>, fd_hvp: bool, warm: Option<u64>) {
    if let Some(t) = tol {
        s.grad_tol = Some(t);
        s.a_olqr.eps = t;
    }
    if max_iters.is_some() {
        s.max_iters = max_iters;
    }
    if fd_hvp {
        s.a_olqr.hvp_mode = HvpMode::FiniteDifference;
    }
    if warm.is_some() {
        s.warm_start_gd = warm;
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Gen { generator, n, m, seed, out } => {
            let p = match generator {
                GeneratorName::IntegratorChain => gen_integrator_chain(n)?,
                GeneratorName::OlqrChain => gen_olqr_chain(n)?,
                GeneratorName::RandomMedium => gen_random_medium(n, m, seed)?,
            };
            emit(out.as_ref(), &(p.to_json() + "\n"))?;
            Ok(true)
        }
        Command::Certify { problem, alpha, gain, f_star } => {
            let p = load_problem(&problem)?;
            let k = initial_gain(&p, &gain)?;
            let alpha = match alpha {
                Some(a) => a,
                None => cost(&p, &k)?,
            };
            let f_star = match f_star {
                Some(v) => Some(v),
                None if p.kind() == Kind::Slqr => Some(cost(&p, care_oracle(&p, &k)?.matrix())?),
                None => None,
            };
            let bundle = constants(&p, alpha, f_star)?;
            emit(None, &(serde_json::to_string_pretty(&bundle).map_err(config_err)? + "\n"))?;
            Ok(true)
        }
        Command::Solve(a) => {
            let p = load_problem(&a.problem)?;
            let mut settings = match &a.config {
                Some(path) => serde_json::from_str::<SolverSettings>(
                    &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?,
                )
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(config_err)?,
                None => SolverSettings::default(),
            };
            apply_overrides(&mut settings, a.tol, a.max_iters, a.fd_hvp, a.warm_start_gd);
            let k0 = initial_gain(&p, &a.gain)?;
            let trace = run_solver(&p, &k0, a.solver, &settings, a.seed)?;
            emit(a.out.as_ref(), &trace.to_csv())?;
            if let Some(last) = trace.last() {
                eprintln!(
                    "{}: {} after {} iterations, f = {:.10e}, |grad f| = {:.3e}",
                    a.solver, trace.status, last.iter, last.f, last.grad_norm
                );
            }
            Ok(trace.status == Status::Converged)
        }
        Command::Bench { config, out, seed, tol, max_iters, fd_hvp, warm_start_gd } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display())).map_err(config_err)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if !seed.is_empty() {
                cfg.seeds = seed;
            }
            apply_overrides(&mut cfg.settings, tol, max_iters, fd_hvp, warm_start_gd);
            let report = run_experiment(&cfg)?;
            println!("{:<12} {:>5} {:>9} {:>14} {:>22} {:>12}", "solver", "runs", "converged", "mean iters", "best f", "mean ms");
            for row in &report.comparison {
                let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
                println!(
                    "{:<12} {:>5} {:>9} {:>14} {:>22} {:>12}",
                    row.solver.name(),
                    row.runs,
                    row.converged,
                    opt(row.mean_iters, 1),
                    opt(row.best_f, 12),
                    opt(row.mean_wall_ms, 1)
                );
            }
            for run in report.runs.iter().filter(|r| r.error.is_some()) {
                eprintln!("{} seed {}: {}", run.solver, run.seed, run.error.as_deref().unwrap_or_default());
            }
            eprintln!("report written to {}", cfg.output_dir.join("report.json").display());
            Ok(report.all_converged())
        }
        Command::Oracle { problem, gain } => {
            let p = load_problem(&problem)?;
            let k0 = initial_gain(&p, &gain)?;
            let sol = care_solve(&p, &k0)?;
            let out = serde_json::json!({
                "gain": sol.gain,
                "cost": sol.cost,
                "grad_norm": sol.grad_norm,
                "iterations": sol.iterations,
            });
            emit(None, &(serde_json::to_string_pretty(&out).map_err(config_err)? + "\n"))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
