use super::context::Ctx;
use super::standard::{run_ce_at_level, LevelEnd};
use super::{CeConfig, CeObserver, CeResult, NoObserver};
use crate::families::ProposalFamily;
use crate::hierarchy::ScoreHierarchy;

/// Pre-conditioned CE: the standard loop is run on each level in turn, from
/// the cheapest, each starting at the previous level's output. Below the top
/// level an unreachable quantile target moves on to the next level instead
/// of growing the sample.
pub fn run_preconditioned_ce<F, H>(
    config: &CeConfig,
    family: &F,
    hierarchy: &H,
    mu: &F::Params,
) -> CeResult<F::Params>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    run_preconditioned_ce_observed(config, family, hierarchy, mu, &mut NoObserver)
}

pub fn run_preconditioned_ce_observed<F, H>(
    config: &CeConfig,
    family: &F,
    hierarchy: &H,
    mu: &F::Params,
    observer: &mut dyn CeObserver,
) -> CeResult<F::Params>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    let mut ctx = Ctx::new(family, hierarchy, mu, config, observer);
    let result = config.validate().and_then(|()| {
        let top = ctx.top();
        let mut nu = mu.clone();
        let mut m = config.m;
        for level in 0..=top {
            let stage = level;
            let start_m = if config.precondition_inherit_m {
                m
            } else {
                config.m
            };
            match run_ce_at_level(&mut ctx, stage, level, nu, start_m, level == top)? {
                LevelEnd::Converged {
                    nu: n,
                    m: last_m,
                    updates,
                } => {
                    if level == top {
                        let p = ctx.final_estimate(&n, last_m, stage, updates)?;
                        return Ok((n, p));
                    }
                    nu = n;
                    m = last_m;
                }
                LevelEnd::Stalled { nu: n, m: last_m } => {
                    nu = n;
                    m = last_m;
                }
            }
        }
        unreachable!("the top level always converges or fails")
    });
    ctx.finish(result)
}
