//! Hessian-free output-feedback solver: restarted NAG, Semiconvex-NAG,
//! negative curvature descent and the outer loop combining them.

mod aolqr;
mod nag;
mod ncd;
mod oracle;
mod snag;

pub use aolqr::{a_olqr, AOlqrConfig, AOlqrOutcome};
pub use nag::{nag_iteration_bound, nag_restart, NagOutcome, NagRecord};
pub use ncd::{derive_seed, ncd, NcdConfig, NcdOutcome, NcdRun, NcdStep};
pub use oracle::{build_penalized, FnOracle, HvpMode, LqrObjective, OracleCounts, Penalized, Regularized, SmoothOracle};
pub use snag::{decrease_holds, inner_tolerance, semiconvex_nag, SnagOutcome};
