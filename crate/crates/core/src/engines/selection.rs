//! Relaxed sets, the plug-in level-selection criterion and the iteration
//! bound.

use super::context::{Ctx, Grower};
use crate::batch::SampleBatch;
use crate::error::Result;
use crate::families::ProposalFamily;
use crate::hierarchy::ScoreHierarchy;
use crate::quantile::{adapt_rho_m, empirical_quantile, AdaptSettings, Adaptation};

/// Relative slack for `⌈·⌉` so that ratios such as `0.76/0.01` that land a
/// few ulps above an integer are not rounded up.
const CEIL_SLACK: f64 = 1e-9;

/// `α̂ = c · max_i ε(z_i)`; zero for a high-fidelity batch.
pub fn alpha_hat(batch: &SampleBatch, c: f64) -> f64 {
    let worst = batch.bounds.iter().copied().fold(0.0, f64::max);
    c * worst
}

/// Threshold of the relaxed set `{φ^(k) ≥ min(γ_k − 2α, γ* + α)}`.
pub fn relaxed_threshold(gamma_k: f64, alpha: f64, gamma_star: f64) -> f64 {
    debug_assert!(alpha >= 0.0);
    (gamma_k - 2.0 * alpha).min(gamma_star + alpha)
}

fn count_at_least(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < t)
}

/// `#{s ∈ [a, b]}` on sorted scores.
fn count_in(sorted: &[f64], a: f64, b: f64) -> usize {
    sorted.partition_point(|&s| s <= b) - sorted.partition_point(|&s| s < a)
}

/// Largest fraction of scores in a window `[γ′, γ′+α]` with
/// `γ′ ∈ [lo, hi]`. The count only changes where a window edge crosses a
/// score, so it suffices to try `γ′ ∈ {s_i, s_i − α}` and both endpoints.
fn max_window_fraction(sorted: &[f64], alpha: f64, lo: f64, hi: f64) -> f64 {
    let candidates = sorted
        .iter()
        .flat_map(|&s| [s, s - alpha])
        .chain([lo, hi])
        .filter(|g| (lo..=hi).contains(g));
    let best = candidates
        .map(|g| count_in(sorted, g, g + alpha))
        .max()
        .unwrap_or(0);
    best as f64 / sorted.len() as f64
}

/// Plug-in criterion `ϖ = ρ̲ − η̄`: positive values certify that the
/// current surrogate scores can reach `γ̄` despite their error `α`.
/// Returns `−∞` when no score reaches `γ̄ − α`.
pub fn varpi(scores: &[f64], alpha: f64, gamma_bar: f64) -> f64 {
    assert!(!scores.is_empty(), "varpi needs at least one score");
    debug_assert!(alpha >= 0.0);
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let lower = count_at_least(&sorted, gamma_bar + alpha);
    let upper = count_at_least(&sorted, gamma_bar - alpha);
    if upper == 0 {
        return f64::NEG_INFINITY;
    }
    let gamma_b = empirical_quantile(&sorted, upper as f64 / m);
    if lower == 0 {
        return -max_window_fraction(&sorted, alpha, gamma_b, gamma_b);
    }
    let gamma_u = empirical_quantile(&sorted, lower as f64 / m);
    lower as f64 / m - max_window_fraction(&sorted, alpha, gamma_b, gamma_u)
}

/// `⌈(γ* − γ₀ − α₀)/δ⌉ + 1` (or without `α₀` for an exact score), at
/// least 1.
pub fn jmax_bound(gamma_star: f64, gamma0: f64, alpha0: f64, delta: f64) -> usize {
    assert!(delta > 0.0, "delta must be positive");
    let gap = if alpha0 > 0.0 {
        gamma_star - gamma0 - alpha0
    } else {
        gamma_star - gamma0
    };
    let ratio = gap / delta;
    let steps = (ratio - CEIL_SLACK * ratio.abs().max(1.0)).ceil();
    if steps <= 0.0 {
        1
    } else {
        steps as usize + 1
    }
}

/// Quantities of iteration `j − 1` that the acceptance test of iteration `j`
/// compares against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreviousIteration {
    pub gamma: f64,
    pub alpha: f64,
    pub rho: f64,
}

/// Adapts `(ρ, m, k)` for a fresh batch until both the quantile-increase and
/// the non-increasing-error conditions hold. The batch is grown or rescored
/// in place; the returned value is the accepted `ρ`.
pub(crate) fn select_level<F, H>(
    ctx: &mut Ctx<'_, F, H>,
    batch: &mut SampleBatch,
    nu: &F::Params,
    prev: PreviousIteration,
    j: usize,
) -> Result<f64>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    let cfg = ctx.config;
    let top = ctx.top();
    let c = ctx.hierarchy.error_constant();
    let mut rho = prev.rho;
    let mut next_block = 0u64;
    loop {
        let alpha = alpha_hat(batch, c);
        let error_in_gamma = if cfg.alpha_substitution {
            alpha
        } else {
            prev.alpha
        };
        let gamma_tilde = prev.gamma + 2.0 * error_in_gamma + cfg.delta;
        let gamma_bar = (cfg.gamma_star + alpha).min(gamma_tilde);
        let error_ok = alpha <= prev.alpha;
        if error_ok && empirical_quantile(&batch.scores, rho) >= gamma_bar {
            return Ok(rho);
        }
        let level = batch.level_used;
        let adapt_here = level == top || (error_ok && varpi(&batch.scores, alpha, gamma_bar) > 0.0);
        if adapt_here {
            let settings = AdaptSettings {
                beta: cfg.beta,
                m_max: cfg.m_max,
                allow_growth: true,
            };
            let mut grower = Grower {
                ctx: &mut *ctx,
                batch: &mut *batch,
                nu,
                stage: 0,
                j,
                next_block: &mut next_block,
            };
            match adapt_rho_m(&mut grower, rho, gamma_bar, settings)? {
                Adaptation::Satisfied { rho: r } => rho = r,
                Adaptation::Infeasible => unreachable!("growth is allowed"),
            }
        } else {
            debug_assert!(level < top);
            ctx.rescore(batch, level + 1);
            rho = prev.rho;
        }
    }
}
