//! Empirical `(1−ρ)`-quantiles and the joint adaptation of `(ρ, m)`.
//!
//! The quantile is `max{s : #{i : scores_i < s} / m ≤ 1 − ρ}`. With
//! `c = ⌊m(1−ρ)⌋` this is the `(c+1)`-th smallest score, i.e. always a
//! member of the sample, and equivalently the `t`-th largest with
//! `t = m − c`. No interpolation is performed.

use crate::error::{MfceError, Result};

/// Slack absorbing round-off in `m(1−ρ)` when `ρ` lies on the grid `i/m`.
const GRID_SLACK: f64 = 1e-9;

fn count_below_limit(m: usize, rho: f64) -> usize {
    let c = ((1.0 - rho) * m as f64 + GRID_SLACK).floor();
    (c.max(0.0) as usize).min(m - 1)
}

/// Empirical `(1−ρ)`-quantile for `ρ ∈ (0, 1]` (at `ρ = 1` the minimum).
pub fn empirical_quantile(scores: &[f64], rho: f64) -> f64 {
    assert!(!scores.is_empty(), "quantile of an empty sample");
    assert!(rho > 0.0 && rho <= 1.0, "rho = {rho} outside (0, 1]");
    let c = count_below_limit(scores.len(), rho);
    let mut buf = scores.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(c, |a, b| a.total_cmp(b));
    *v
}

/// Same as [`empirical_quantile`] on an ascending-sorted sample.
pub fn quantile_sorted(sorted: &[f64], rho: f64) -> f64 {
    assert!(!sorted.is_empty());
    sorted[count_below_limit(sorted.len(), rho)]
}

/// Largest `ρ ∈ {1/m, …, (m−1)/m}` whose quantile reaches `gamma_bar`.
pub fn largest_feasible_rho(scores: &[f64], gamma_bar: f64) -> Option<f64> {
    let m = scores.len();
    assert!(m > 0);
    // The quantile at ρ = t/m is the t-th largest score.
    let t = scores
        .iter()
        .filter(|&&s| s >= gamma_bar)
        .count()
        .min(m - 1);
    (t > 0).then(|| t as f64 / m as f64)
}

/// A sample that can be enlarged by drawing from the current proposal.
pub trait GrowableSample {
    fn scores(&self) -> &[f64];
    /// Draws and scores `extra` further points.
    fn grow(&mut self, extra: usize) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Adaptation {
    /// The quantile condition holds at this `ρ`.
    Satisfied { rho: f64 },
    /// No grid `ρ` qualifies and growth was disallowed.
    Infeasible,
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptSettings {
    pub beta: f64,
    pub m_max: usize,
    pub allow_growth: bool,
}

/// Keeps `ρ` if `γ(ρ) ≥ γ̄` already holds, otherwise moves to the largest
/// feasible grid `ρ`, otherwise grows the sample by `⌈βm⌉ − m` and retries.
pub fn adapt_rho_m<S: GrowableSample + ?Sized>(
    sample: &mut S,
    rho: f64,
    gamma_bar: f64,
    settings: AdaptSettings,
) -> Result<Adaptation> {
    assert!(settings.beta > 1.0, "growth factor must exceed 1");
    loop {
        let scores = sample.scores();
        if empirical_quantile(scores, rho) >= gamma_bar {
            return Ok(Adaptation::Satisfied { rho });
        }
        if let Some(r) = largest_feasible_rho(scores, gamma_bar) {
            return Ok(Adaptation::Satisfied { rho: r });
        }
        if !settings.allow_growth {
            return Ok(Adaptation::Infeasible);
        }
        let m = scores.len();
        let grown = (settings.beta * m as f64).ceil() as usize;
        if grown > settings.m_max {
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Err(MfceError::BudgetExhausted {
                m,
                m_max: settings.m_max,
                gap: gamma_bar - best,
            });
        }
        sample.grow(grown.max(m + 1) - m)?;
    }
}
