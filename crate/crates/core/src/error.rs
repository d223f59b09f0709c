use thiserror::Error;

use crate::Matrix;

/// Errors raised by the numerical kernels, oracles and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:e} >= -{margin:e})")]
    NotHurwitz { abscissa: f64, margin: f64 },

    #[error("vectorized Lyapunov system is numerically singular")]
    SingularSystem,

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("eigenvector estimate not certified after {iterations} iterations")]
    BudgetExceeded { iterations: usize },

    #[error("gain is not stabilizing")]
    NotStabilizing,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("sublevel value must be positive, got {0}")]
    InvalidAlpha(f64),

    #[error("input matrix B is zero")]
    ZeroInput,

    #[error("Riccati iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("gradient step left the stabilizing set at iteration {iter}")]
    StepRejected { iter: u64 },

    #[error("damping violates 1 - 2*d*eta > 0 (d={d}, eta={eta})")]
    InvalidDamping { d: f64, eta: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("restart budget of {limit} exceeded")]
    RestartBudgetExceeded { limit: usize },

    #[error("jump budget of {limit} exceeded")]
    JumpBudgetExceeded { limit: usize },

    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(&'static str),

    #[error("accelerated gradient exceeded twice its iteration bound ({iterations} > 2 x {bound:.1})")]
    NonConvexDetected { iterations: u64, bound: f64 },

    #[error("{routine} exceeded its iteration budget of {limit}")]
    IterationBudgetExceeded { routine: &'static str, limit: u64 },

    #[error("minimum-eigenvector probe failed: {0}")]
    EigenBudgetExceeded(Box<Error>),

    #[error("query point left the feasible set")]
    LeftFeasibleSet { gain: Matrix },

    #[error("problem generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
