//! Policy optimization for continuous-time linear-quadratic regulators.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod linalg;
pub mod lqr;
pub mod olqr;
pub mod slqr;
pub mod trace;

pub use error::{Error, Result};
pub use lqr::{ConstantsBundle, Gain, Kind, LqrProblem};
pub use trace::{Status, Trace};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
