//! Score hierarchies shipped with the crate.

pub mod analytic;
pub mod pde;

pub use analytic::{LinearGaussianProblem, BENCHMARK_FLOOR};
