//! Seeded repetitions of one configuration and their file outputs.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::config::{Algorithm, ExperimentConfig, LevelSpec, PdeConfig, ProblemConfig};
use crate::engines::{
    run_multifidelity_ce, run_preconditioned_ce, run_standard_ce, CeConfig, CeResult, CeTrace,
    PhaseTimings,
};
use crate::error::{MfceError, Result};
use crate::estimators::{
    empirical_scv, mean_and_standard_error, EstimateReport, PhaseSeconds, RunSummary, TraceRow,
};
use crate::families::{GaussianFamily, GaussianParams};
use crate::hierarchy::{LevelSubset, ScoreHierarchy};
use crate::models::pde::{read_pod_file, snapshot_parameters, HighFidelityModel, PodHierarchy};
use crate::models::LinearGaussianProblem;

/// A repetition that ended in an engine error, with what it recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
    pub per_level_evals: BTreeMap<String, u64>,
    pub trace_summary: Vec<TraceRow>,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub report: EstimateReport,
    pub failures: Vec<RunFailure>,
}

impl ExperimentReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// The score model described by a config: either an analytic problem viewed
/// through the requested surrogates, or a POD hierarchy built for exactly
/// the requested dimensions.
pub enum BuiltProblem {
    Analytic {
        problem: LinearGaussianProblem,
        levels: Vec<usize>,
    },
    Pde {
        hierarchy: PodHierarchy,
        mu: GaussianParams,
    },
    /// A PDE level set holding only `"hifi"`; no basis is built.
    PdeHighFidelity {
        model: HighFidelityModel,
        mu: GaussianParams,
    },
}

impl BuiltProblem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.problem {
            ProblemConfig::Analytic(a) => {
                let problem = a.problem(cfg.engine.gamma_star)?;
                let mut levels: Vec<usize> = cfg.reduced_levels().iter().map(|d| d - 1).collect();
                levels.push(problem.alphas.len());
                Ok(BuiltProblem::Analytic { problem, levels })
            }
            ProblemConfig::Pde(c) if cfg.reduced_levels().is_empty() => {
                Ok(BuiltProblem::PdeHighFidelity {
                    model: HighFidelityModel::new(c.problem())?,
                    mu: GaussianParams::isotropic(c.mean(), c.variance),
                })
            }
            ProblemConfig::Pde(c) => {
                let hierarchy = build_pod(c, &cfg.reduced_levels())?;
                let mu = GaussianParams::isotropic(c.mean(), c.variance);
                Ok(BuiltProblem::Pde { hierarchy, mu })
            }
        }
    }

    /// Reference probability for SCV: exact for the analytic problem,
    /// configured for the PDE problem.
    pub fn p_ref(&self, cfg: &ExperimentConfig) -> Option<f64> {
        match (self, &cfg.problem) {
            (BuiltProblem::Analytic { problem, .. }, _) => Some(problem.exact_probability()),
            (
                BuiltProblem::Pde { .. } | BuiltProblem::PdeHighFidelity { .. },
                ProblemConfig::Pde(c),
            ) => c.p_ref,
            _ => None,
        }
    }

    fn run(&self, algorithm: Algorithm, engine: &CeConfig) -> CeResult<GaussianParams> {
        let family = GaussianFamily {
            floor: engine.floor,
        };
        match self {
            BuiltProblem::Analytic { problem, levels } => {
                let view = LevelSubset::new(problem, levels.clone());
                dispatch(algorithm, engine, &family, &view, &problem.mu)
            }
            BuiltProblem::Pde { hierarchy, mu } => {
                dispatch(algorithm, engine, &family, hierarchy, mu)
            }
            BuiltProblem::PdeHighFidelity { model, mu } => {
                dispatch(algorithm, engine, &family, model, mu)
            }
        }
    }
}

/// Builds the POD hierarchy from snapshots, or loads it from `podfile`.
pub fn build_pod(c: &PdeConfig, dims: &[usize]) -> Result<PodHierarchy> {
    let problem = c.problem();
    let hierarchy = match &c.podfile {
        Some(path) => {
            let h = read_pod_file(path, &problem)?;
            if h.dims() != dims {
                return Err(MfceError::config(
                    "problem.podfile",
                    format!(
                        "file holds dimensions {:?}, config asks for {dims:?}",
                        h.dims()
                    ),
                ));
            }
            h
        }
        None => {
            let s = &c.snapshots;
            let params = snapshot_parameters(&c.mean(), s.spread, s.count, s.seed);
            PodHierarchy::build(&problem, &params, dims.to_vec())?
        }
    };
    Ok(hierarchy.with_provider(c.bound))
}

fn dispatch<H: ScoreHierarchy + ?Sized>(
    algorithm: Algorithm,
    engine: &CeConfig,
    family: &GaussianFamily,
    hierarchy: &H,
    mu: &GaussianParams,
) -> CeResult<GaussianParams> {
    match algorithm {
        Algorithm::Standard => run_standard_ce(engine, family, hierarchy, mu),
        Algorithm::Preconditioned => run_preconditioned_ce(engine, family, hierarchy, mu),
        Algorithm::Multifidelity => run_multifidelity_ce(engine, family, hierarchy, mu),
    }
}

fn per_level<T: Copy>(labels: &[String], values: &[T]) -> BTreeMap<String, T> {
    labels.iter().cloned().zip(values.iter().copied()).collect()
}

fn trace_rows<P>(labels: &[String], trace: &CeTrace<P>) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            stage: r.stage,
            j: r.j,
            level: labels[r.level].clone(),
            rho: r.rho,
            m: r.m,
            gamma: r.gamma,
            alpha: r.alpha,
        })
        .collect()
}

fn phase_seconds(labels: &[String], t: &PhaseTimings) -> PhaseSeconds {
    PhaseSeconds {
        sampling: t.sampling,
        scoring: per_level(labels, &t.scoring),
        ce_update: t.ce_update,
        final_is: t.final_is,
        total: t.total,
    }
}

/// Worker pool capped by `MFCE_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MFCE_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            MfceError::config(
                "MFCE_THREADS",
                format!("expected a positive integer, got {v:?}"),
            )
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| MfceError::InvalidParameter(format!("worker pool: {e}")))
}

/// Runs every repetition of `cfg` and aggregates the successful ones.
/// Engine errors are collected per repetition instead of aborting the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let built = BuiltProblem::build(cfg)?;
    run_built(cfg, &built)
}

pub fn run_built(cfg: &ExperimentConfig, built: &BuiltProblem) -> Result<ExperimentReport> {
    use rayon::prelude::*;
    let labels = cfg.level_labels();
    let top = labels.len() - 1;
    let seeds: Vec<u64> = (0..cfg.repetitions as u64)
        .map(|r| cfg.seed.wrapping_add(r))
        .collect();
    let outcomes: Vec<(u64, CeResult<GaussianParams>)> = thread_pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let engine = CeConfig {
                    seed,
                    ..cfg.engine.clone()
                };
                (seed, built.run(cfg.algorithm, &engine))
            })
            .collect()
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(out) => {
                let t = &out.trace;
                runs.push(RunSummary {
                    seed,
                    p_hat: out.p_hat,
                    m_final: t.final_m,
                    per_level_evals: per_level(&labels, &t.evaluations),
                    hf_evals: t.evaluations[top],
                    per_level_iterations: per_level(&labels, &t.updates_per_level),
                    wall_clock_s: phase_seconds(&labels, &out.timings),
                    trace_summary: trace_rows(&labels, t),
                    jmax: t.jmax(),
                    iterations: t.iterations(),
                })
            }
            Err(fail) => failures.push(RunFailure {
                seed,
                error: fail.error.to_string(),
                per_level_evals: per_level(&labels, &fail.trace.evaluations),
                trace_summary: trace_rows(&labels, &fail.trace),
            }),
        }
    }

    let p_ref = built.p_ref(cfg);
    let estimates: Vec<f64> = runs.iter().map(|r| r.p_hat).collect();
    let (p_hat, se) = if estimates.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_and_standard_error(&estimates)
    };
    let scv_reference = p_ref.or((p_hat > 0.0).then_some(p_hat));
    let scv = match scv_reference {
        Some(r) if estimates.len() >= 2 => Some(empirical_scv(&estimates, r)),
        _ => None,
    };
    let n = runs.len().max(1) as f64;
    let per_level_evals = labels
        .iter()
        .map(|l| {
            (
                l.clone(),
                runs.iter()
                    .map(|r| r.per_level_evals[l] as f64)
                    .fold(0.0, |a, b| a + b)
                    / n,
            )
        })
        .collect();
    let report = EstimateReport {
        algorithm: cfg.algorithm.name().into(),
        levels: labels,
        m: cfg.engine.m,
        p_hat,
        p_hat_standard_error: se,
        p_ref,
        empirical_scv: scv,
        m_final: runs.iter().map(|r| r.m_final).max().unwrap_or(0),
        per_level_evals,
        mean_wall_clock_s: runs
            .iter()
            .map(|r| r.wall_clock_s.total)
            .fold(0.0, |a, b| a + b)
            / n,
        runs,
    };
    Ok(ExperimentReport {
        config: cfg.clone(),
        report,
        failures,
    })
}

/// Per-run squared relative error against `p_ref`, or against the mean of
/// the batch when no reference is known.
fn run_scv(report: &EstimateReport, p_hat: f64) -> Option<f64> {
    let r = report.p_ref.unwrap_or(report.p_hat);
    (r > 0.0).then(|| ((p_hat - r) / r).powi(2))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `runs.csv`: one row per successful repetition.
pub fn runs_csv(report: &EstimateReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "algorithm",
        "m",
        "levels",
        "seed",
        "p_hat",
        "scv",
        "wall_clock_s",
        "hf_evals",
    ]
    .map(String::from)
    .to_vec();
    header.extend(report.levels.iter().map(|l| format!("iters_{l}")));
    w.write_record(&header).map_err(csv_error)?;
    let levels = report.levels.join(";");
    for run in &report.runs {
        let mut row = vec![
            report.algorithm.clone(),
            report.m.to_string(),
            levels.clone(),
            run.seed.to_string(),
            run.p_hat.to_string(),
            fmt_opt(run_scv(report, run.p_hat)),
            run.wall_clock_s.total.to_string(),
            run.hf_evals.to_string(),
        ];
        row.extend(
            report
                .levels
                .iter()
                .map(|l| run.per_level_iterations[l].to_string()),
        );
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

pub(crate) fn csv_error(e: csv::Error) -> MfceError {
    MfceError::Io(std::io::Error::other(e))
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| MfceError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `report.json` and `runs.csv` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    std::fs::write(dir.join("runs.csv"), runs_csv(&report.report)?)?;
    Ok(())
}

/// Levels in cost order: `d<k>` by `k`, then `hifi`.
pub(crate) fn label_order(label: &str) -> (usize, String) {
    match label.strip_prefix('d').and_then(|k| k.parse().ok()) {
        Some(k) => (k, String::new()),
        None => (usize::MAX, label.to_string()),
    }
}

pub(crate) fn level_key(levels: &[LevelSpec]) -> String {
    levels
        .iter()
        .map(|l| l.label())
        .collect::<Vec<_>>()
        .join(";")
}
