//! Config-driven experiments: repetitions, reports and comparisons.

mod compare;
mod config;
mod runner;

pub use compare::{check_comparable, compare, compare_csv};
pub use config::{
    Algorithm, AnalyticConfig, ExperimentConfig, LevelSpec, PdeConfig, ProblemConfig,
    SnapshotConfig,
};
pub use runner::{
    build_pod, run_built, run_experiment, runs_csv, thread_pool, write_outputs, BuiltProblem,
    ExperimentReport, RunFailure,
};
