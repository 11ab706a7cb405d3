//! Side-by-side summary of several configurations on one problem.

use serde_json::Value;
use std::collections::BTreeSet;

use super::config::{ExperimentConfig, ProblemConfig};
use super::runner::{csv_error, finish, label_order, level_key, run_experiment, ExperimentReport};
use crate::error::{MfceError, Result};

/// The part of a config that defines the rare event itself. Surrogate
/// settings (analytic bound magnitudes, snapshots, bound provider, POD file)
/// may differ between compared configurations.
fn problem_identity(cfg: &ExperimentConfig) -> Value {
    let mut v = serde_json::to_value(&cfg.problem).expect("config serializes");
    let surrogate_keys: &[&str] = match cfg.problem {
        ProblemConfig::Analytic(_) => &["alphas", "u"],
        ProblemConfig::Pde(_) => &["bound", "snapshots", "podfile", "p_ref"],
    };
    if let ProblemConfig::Pde(c) = &cfg.problem {
        v["mean"] = serde_json::to_value(c.mean()).expect("mean serializes");
    }
    let obj = v.as_object_mut().expect("problem is an object");
    for k in surrogate_keys {
        obj.remove(*k);
    }
    serde_json::json!({"problem": v, "gamma_star": cfg.engine.gamma_star})
}

pub fn check_comparable(configs: &[ExperimentConfig]) -> Result<()> {
    if configs.len() < 2 {
        return Err(MfceError::IncompatibleComparison(
            "at least two configurations are needed".into(),
        ));
    }
    let first = problem_identity(&configs[0]);
    for (i, c) in configs.iter().enumerate().skip(1) {
        if problem_identity(c) != first {
            return Err(MfceError::IncompatibleComparison(format!(
                "configuration {i} defines a different problem than configuration 0"
            )));
        }
    }
    Ok(())
}

/// Runs every configuration after checking that they share one problem.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Vec<ExperimentReport>> {
    check_comparable(configs)?;
    configs.iter().map(run_experiment).collect()
}

/// `compare.csv`: one row per configuration with its SCV, mean wall-clock,
/// mean high-fidelity evaluations and mean CE iterations per level. Level
/// columns cover the union of all level sets; a level outside a row's set
/// is left empty.
pub fn compare_csv(reports: &[ExperimentReport]) -> Result<String> {
    let mut labels: Vec<String> = reports
        .iter()
        .flat_map(|r| r.report.levels.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    labels.sort_by_key(|l| label_order(l));

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "algorithm",
        "m",
        "levels",
        "runs",
        "scv",
        "wall_clock_s",
        "hf_evals",
    ]
    .map(String::from)
    .to_vec();
    header.extend(labels.iter().map(|l| format!("iters_{l}")));
    w.write_record(&header).map_err(csv_error)?;

    for r in reports {
        let e = &r.report;
        let n = e.runs.len().max(1) as f64;
        let hf = e
            .runs
            .iter()
            .map(|x| x.hf_evals as f64)
            .fold(0.0, |a, b| a + b)
            / n;
        let mut row = vec![
            e.algorithm.clone(),
            e.m.to_string(),
            level_key(&r.config.levels),
            e.runs.len().to_string(),
            e.empirical_scv.map(|v| v.to_string()).unwrap_or_default(),
            e.mean_wall_clock_s.to_string(),
            hf.to_string(),
        ];
        for l in &labels {
            row.push(if e.levels.contains(l) {
                let it = e
                    .runs
                    .iter()
                    .map(|x| x.per_level_iterations[l] as f64)
                    .fold(0.0, |a, b| a + b)
                    / n;
                it.to_string()
            } else {
                String::new()
            });
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}
