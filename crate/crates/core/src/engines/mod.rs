//! The three CE engines and the machinery they share.
//!
//! All engines draw every batch from a substream keyed by
//! `[stage, iteration, purpose, block]`, so a run is a pure function of its
//! configuration and seed. With a single-level hierarchy the pre-conditioned
//! and multi-fidelity engines reduce exactly to the standard engine.

mod context;
mod multifidelity;
mod preconditioned;
mod selection;
mod standard;

pub use multifidelity::{run_multifidelity_ce, run_multifidelity_ce_observed};
pub use preconditioned::{run_preconditioned_ce, run_preconditioned_ce_observed};
pub use selection::{alpha_hat, jmax_bound, relaxed_threshold, varpi, PreviousIteration};
pub use standard::{run_standard_ce, run_standard_ce_observed};

use serde::{Deserialize, Serialize};

use crate::batch::ParameterPoint;
use crate::error::{MfceError, Result};

/// Engine parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeConfig {
    /// Initial sample size.
    pub m: usize,
    /// Initial quantile parameter.
    pub rho: f64,
    /// Minimal quantile increase per iteration.
    pub delta: f64,
    /// Sample growth factor.
    pub beta: f64,
    /// Rare-event threshold `γ*`.
    pub gamma_star: f64,
    /// Covariance eigenvalue floor; the experiment layer builds the Gaussian
    /// family from it, engines themselves use whatever family they are given.
    pub floor: f64,
    /// Sample cap turning an unreachable quantile target into an error.
    pub m_max: usize,
    /// Use the current rather than the previous error bound in `γ̃`.
    pub alpha_substitution: bool,
    /// Pre-conditioned engine: start each level with the previous level's
    /// final sample size instead of `m`.
    pub precondition_inherit_m: bool,
    pub seed: u64,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            m: 1000,
            rho: 0.2,
            delta: 1e-2,
            beta: 1.25,
            gamma_star: 0.0,
            floor: crate::families::DEFAULT_FLOOR,
            m_max: 1_000_000,
            alpha_substitution: false,
            precondition_inherit_m: false,
            seed: 0,
        }
    }
}

impl CeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(MfceError::config(format!("engine.{key}"), msg));
        if self.m < 2 {
            return bad("m", format!("must be at least 2, got {}", self.m));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho", format!("must lie in (0, 1), got {}", self.rho));
        }
        if !(self.delta > 0.0) {
            return bad("delta", format!("must be positive, got {}", self.delta));
        }
        if !(self.beta > 1.0) {
            return bad("beta", format!("must exceed 1, got {}", self.beta));
        }
        if !(self.floor > 0.0) {
            return bad("floor", format!("must be positive, got {}", self.floor));
        }
        if self.m_max < self.m {
            return bad(
                "m_max",
                format!("must be at least m = {}, got {}", self.m, self.m_max),
            );
        }
        if !self.gamma_star.is_finite() {
            return bad("gamma_star", "must be finite".into());
        }
        Ok(())
    }
}

/// State after iteration `j` of one stage: the proposal `ν_j`, the adapted
/// `(ρ_j, m_j, k_j)`, the empirical quantile at level `k_j` and `α_{k_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<P> {
    pub stage: usize,
    pub j: usize,
    pub level: usize,
    pub rho: f64,
    pub m: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub nu: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSummary {
    pub level: usize,
    pub jmax: usize,
    /// CE updates performed, including the final one on the target event.
    pub updates: usize,
    /// The stage ended early because no quantile parameter was feasible.
    pub stalled: bool,
}

/// The full trace of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct CeTrace<P> {
    pub records: Vec<IterationRecord<P>>,
    pub stages: Vec<StageSummary>,
    /// Model calls per level.
    pub evaluations: Vec<u64>,
    /// CE updates per level of the batch they were fitted on.
    pub updates_per_level: Vec<usize>,
    pub final_nu: Option<P>,
    pub final_m: usize,
    pub p_hat: Option<f64>,
}

impl<P> CeTrace<P> {
    fn new(levels: usize) -> Self {
        CeTrace {
            records: Vec::new(),
            stages: Vec::new(),
            evaluations: vec![0; levels],
            updates_per_level: vec![0; levels],
            final_nu: None,
            final_m: 0,
            p_hat: None,
        }
    }

    /// `J` of the last stage.
    pub fn iterations(&self) -> usize {
        self.stages.last().map_or(0, |s| s.updates)
    }

    pub fn jmax(&self) -> usize {
        self.stages.last().map_or(0, |s| s.jmax)
    }

    pub fn gamma_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gamma).collect()
    }

    pub fn alpha_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }
}

/// Wall-clock seconds per phase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseTimings {
    pub sampling: f64,
    pub scoring: Vec<f64>,
    pub ce_update: f64,
    pub final_is: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct CeOutcome<P> {
    pub nu: P,
    pub p_hat: f64,
    pub trace: CeTrace<P>,
    pub timings: PhaseTimings,
}

/// An engine error together with the trace recorded up to the failure.
#[derive(Debug)]
pub struct CeFailure<P> {
    pub error: MfceError,
    pub trace: CeTrace<P>,
    pub timings: PhaseTimings,
}

impl<P: std::fmt::Debug> std::fmt::Display for CeFailure<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} after {} recorded iterations",
            self.error,
            self.trace.records.len()
        )
    }
}

impl<P: std::fmt::Debug> std::error::Error for CeFailure<P> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type CeResult<P> = std::result::Result<CeOutcome<P>, CeFailure<P>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    /// Update on an intermediate (possibly relaxed) event.
    Intermediate,
    /// Update on the target event itself.
    Final,
}

/// What an engine saw when fitting one proposal.
#[derive(Debug)]
pub struct UpdateEvent<'e> {
    pub kind: UpdateKind,
    pub stage: usize,
    /// Index of the proposal being fitted.
    pub j: usize,
    pub level: usize,
    pub rho: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub points: &'e [ParameterPoint],
    pub scores: &'e [f64],
    pub bounds: &'e [f64],
    pub members: &'e [bool],
}

/// Hook for diagnostics; never affects the run.
pub trait CeObserver {
    fn on_update(&mut self, event: &UpdateEvent<'_>);
}

pub struct NoObserver;

impl CeObserver for NoObserver {
    fn on_update(&mut self, _: &UpdateEvent<'_>) {}
}

impl<T: FnMut(&UpdateEvent<'_>)> CeObserver for T {
    fn on_update(&mut self, event: &UpdateEvent<'_>) {
        self(event)
    }
}
