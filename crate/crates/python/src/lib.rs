//! Python bindings. Configurations and reports cross the boundary as JSON
//! (the same format the `mfce` CLI reads and writes), which keeps the
//! binding thin: every function below has a plain Rust counterpart in
//! [`api`] that the integration tests exercise without an interpreter.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mfce::MfceError;

pub mod api {
    use mfce::experiment::{compare, compare_csv, run_experiment, runs_csv, ExperimentConfig};
    use mfce::models::pde::{solve_high_fidelity, sup_norm_score, AdrProblem};
    use mfce::models::LinearGaussianProblem;
    use mfce::Result;

    /// Parses and validates a configuration, returning it with defaults filled in.
    pub fn normalize_config(config_json: &str) -> Result<String> {
        Ok(serde_json::to_string(&ExperimentConfig::from_json(
            config_json,
        )?)?)
    }

    /// Runs an experiment; returns the `report.json` document.
    pub fn estimate(config_json: &str, seed: Option<u64>) -> Result<String> {
        let mut cfg = ExperimentConfig::from_json(config_json)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(serde_json::to_string(&run_experiment(&cfg)?)?)
    }

    /// `runs.csv` of a report produced by [`estimate`].
    pub fn report_runs_csv(report_json: &str) -> Result<String> {
        let report: mfce::experiment::ExperimentReport = serde_json::from_str(report_json)?;
        runs_csv(&report.report)
    }

    /// Runs several configurations on one problem; returns `compare.csv`.
    pub fn compare_configs(configs: &[String]) -> Result<String> {
        let cfgs = configs
            .iter()
            .map(|c| ExperimentConfig::from_json(c))
            .collect::<Result<Vec<_>>>()?;
        compare_csv(&compare(&cfgs)?)
    }

    /// Exact tail probability of the linear-Gaussian benchmark at `gamma_star`.
    pub fn analytic_probability(gamma_star: f64) -> f64 {
        LinearGaussianProblem {
            gamma_star,
            ..LinearGaussianProblem::benchmark()
        }
        .exact_probability()
    }

    /// High-fidelity score `‖f(x)‖∞` of the default PDE problem on an `nx`
    /// grid.
    pub fn pde_score(x: &[f64], nx: usize) -> Result<f64> {
        let problem = AdrProblem {
            nx,
            ..AdrProblem::default()
        };
        problem.validate()?;
        Ok(sup_norm_score(&solve_high_fidelity(&problem, x)?))
    }
}

fn to_py(e: MfceError) -> PyErr {
    match e {
        MfceError::Config { .. }
        | MfceError::InvalidParameter(_)
        | MfceError::IncompatibleComparison(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Validates a JSON configuration and returns it as a dict with defaults filled in.
#[pyfunction]
fn load_config<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    json_loads(py, &api::normalize_config(config_json).map_err(to_py)?)
}

/// Runs the repetitions of a JSON configuration and returns the report as a dict
/// with keys `config`, `report` and `failures`.
#[pyfunction]
#[pyo3(signature = (config_json, seed=None))]
fn estimate<'py>(
    py: Python<'py>,
    config_json: &str,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| api::estimate(config_json, seed))
        .map_err(to_py)?;
    json_loads(py, &report)
}

/// The `runs.csv` text of a report returned by `estimate`.
#[pyfunction]
fn runs_csv(py: Python<'_>, report: &Bound<'_, PyAny>) -> PyResult<String> {
    let text: String = py
        .import("json")?
        .call_method1("dumps", (report,))?
        .extract()?;
    api::report_runs_csv(&text).map_err(to_py)
}

/// Runs several JSON configurations on one problem and returns `compare.csv`.
#[pyfunction]
fn compare(py: Python<'_>, configs: Vec<String>) -> PyResult<String> {
    py.detach(|| api::compare_configs(&configs)).map_err(to_py)
}

/// Exact tail probability of the linear-Gaussian benchmark.
#[pyfunction]
#[pyo3(signature = (gamma_star=4.0))]
fn analytic_probability(gamma_star: f64) -> f64 {
    api::analytic_probability(gamma_star)
}

/// High-fidelity score of the default advection-diffusion-reaction problem.
#[pyfunction]
#[pyo3(signature = (x, nx=32))]
fn pde_score(x: Vec<f64>, nx: usize) -> PyResult<f64> {
    api::pde_score(&x, nx).map_err(to_py)
}

#[pymodule]
fn mfce_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(runs_csv, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_probability, m)?)?;
    m.add_function(wrap_pyfunction!(pde_score, m)?)?;
    Ok(())
}
