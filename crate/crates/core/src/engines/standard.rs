use super::context::{Ctx, Grower};
use super::selection::jmax_bound;
use super::{
    CeConfig, CeObserver, CeResult, IterationRecord, NoObserver, StageSummary, UpdateEvent,
    UpdateKind,
};
use crate::error::Result;
use crate::families::ProposalFamily;
use crate::hierarchy::ScoreHierarchy;
use crate::quantile::{adapt_rho_m, empirical_quantile, AdaptSettings, Adaptation};

/// Standard adaptive CE on the high-fidelity level of `hierarchy`, followed
/// by the IS estimate from the final proposal.
pub fn run_standard_ce<F, H>(
    config: &CeConfig,
    family: &F,
    hierarchy: &H,
    mu: &F::Params,
) -> CeResult<F::Params>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    run_standard_ce_observed(config, family, hierarchy, mu, &mut NoObserver)
}

pub fn run_standard_ce_observed<F, H>(
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
        let end = run_ce_at_level(&mut ctx, 0, top, mu.clone(), config.m, true)?;
        let (nu, m, updates) = end.converged()?;
        let p = ctx.final_estimate(&nu, m, 0, updates)?;
        Ok((nu, p))
    });
    ctx.finish(result)
}

pub(crate) enum LevelEnd<P> {
    /// The target event was reached and `nu` was fitted to it.
    Converged { nu: P, m: usize, updates: usize },
    /// No feasible quantile parameter without growth; `nu` is the last
    /// intermediate proposal.
    Stalled { nu: P, m: usize },
}

impl<P> LevelEnd<P> {
    fn converged(self) -> Result<(P, usize, usize)> {
        match self {
            LevelEnd::Converged { nu, m, updates } => Ok((nu, m, updates)),
            LevelEnd::Stalled { .. } => unreachable!("stalling needs growth to be disabled"),
        }
    }
}

/// One run of the standard CE loop with the scores of `level`, starting at
/// `nu0` with `m` points. In `stage` all draws use substreams prefixed by
/// the stage index.
pub(crate) fn run_ce_at_level<F, H>(
    ctx: &mut Ctx<'_, F, H>,
    stage: usize,
    level: usize,
    nu0: F::Params,
    m: usize,
    allow_growth: bool,
) -> Result<LevelEnd<F::Params>>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    let cfg = ctx.config;
    let gamma_star = cfg.gamma_star;
    let settings = AdaptSettings {
        beta: cfg.beta,
        m_max: cfg.m_max,
        allow_growth,
    };
    let mut nu = nu0;
    let mut batch = ctx.new_batch(&nu, m, stage, 0, level)?;
    let mut rho = cfg.rho;
    let mut gamma = empirical_quantile(&batch.scores, rho);
    let jmax = jmax_bound(gamma_star, gamma, 0.0, cfg.delta);
    let stage_index = ctx.trace.stages.len();
    ctx.trace.stages.push(StageSummary {
        level,
        jmax,
        updates: 0,
        stalled: false,
    });
    let record = |j, rho, m, gamma, nu: &F::Params| IterationRecord {
        stage,
        j,
        level,
        rho,
        m,
        gamma,
        alpha: 0.0,
        nu: nu.clone(),
    };
    ctx.trace
        .records
        .push(record(0, rho, batch.len(), gamma, &nu));

    let mut j = 0;
    while gamma < gamma_star {
        j += 1;
        let threshold = gamma.min(gamma_star);
        let members: Vec<bool> = batch.scores.iter().map(|&s| s >= threshold).collect();
        ctx.notify(UpdateEvent {
            kind: UpdateKind::Intermediate,
            stage,
            j,
            level,
            rho,
            gamma,
            alpha: 0.0,
            threshold,
            points: &batch.points,
            scores: &batch.scores,
            bounds: &batch.bounds,
            members: &members,
        });
        let next = ctx.update(&batch, &members)?;
        ctx.trace.stages[stage_index].updates = j;
        let mut fresh = ctx.new_batch(&next, batch.len(), stage, j, level)?;
        let gamma_bar = gamma_star.min(gamma + cfg.delta);
        let mut next_block = 0;
        let mut grower = Grower {
            ctx: &mut *ctx,
            batch: &mut fresh,
            nu: &next,
            stage,
            j,
            next_block: &mut next_block,
        };
        let adaptation = adapt_rho_m(&mut grower, rho, gamma_bar, settings)?;
        nu = next;
        batch = fresh;
        match adaptation {
            Adaptation::Satisfied { rho: r } => rho = r,
            Adaptation::Infeasible => {
                ctx.trace.records.push(record(
                    j,
                    rho,
                    batch.len(),
                    empirical_quantile(&batch.scores, rho),
                    &nu,
                ));
                ctx.trace.stages[stage_index].stalled = true;
                return Ok(LevelEnd::Stalled { nu, m: batch.len() });
            }
        }
        gamma = empirical_quantile(&batch.scores, rho);
        ctx.trace
            .records
            .push(record(j, rho, batch.len(), gamma, &nu));
    }

    let big_j = j + 1;
    let members: Vec<bool> = batch.scores.iter().map(|&s| s >= gamma_star).collect();
    ctx.notify(UpdateEvent {
        kind: UpdateKind::Final,
        stage,
        j: big_j,
        level,
        rho,
        gamma,
        alpha: 0.0,
        threshold: gamma_star,
        points: &batch.points,
        scores: &batch.scores,
        bounds: &batch.bounds,
        members: &members,
    });
    let nu_final = ctx.update(&batch, &members)?;
    ctx.trace.stages[stage_index].updates = big_j;
    ctx.trace.final_nu = Some(nu_final.clone());
    Ok(LevelEnd::Converged {
        nu: nu_final,
        m: batch.len(),
        updates: big_j,
    })
}
