//! Problem generators and experiment orchestration.

mod experiment;
mod generators;

pub use experiment::*;
pub use generators::*;
