use super::context::Ctx;
use super::selection::{alpha_hat, jmax_bound, relaxed_threshold, select_level, PreviousIteration};
use super::{
    CeConfig, CeObserver, CeResult, IterationRecord, NoObserver, StageSummary, UpdateEvent,
    UpdateKind,
};
use crate::batch::{ParameterPoint, SampleBatch};
use crate::error::Result;
use crate::families::ProposalFamily;
use crate::hierarchy::ScoreHierarchy;
use crate::quantile::empirical_quantile;

/// CE with adaptive selection of the score approximation. Iterations start
/// on the cheapest level and move up only when the certified error bounds
/// make the current level unable to guarantee progress.
pub fn run_multifidelity_ce<F, H>(
    config: &CeConfig,
    family: &F,
    hierarchy: &H,
    mu: &F::Params,
) -> CeResult<F::Params>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    run_multifidelity_ce_observed(config, family, hierarchy, mu, &mut NoObserver)
}

pub fn run_multifidelity_ce_observed<F, H>(
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
    let result = config.validate().and_then(|()| run(&mut ctx));
    ctx.finish(result)
}

fn run<F, H>(ctx: &mut Ctx<'_, F, H>) -> Result<(F::Params, f64)>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    let cfg = ctx.config;
    let gamma_star = cfg.gamma_star;
    let c = ctx.hierarchy.error_constant();
    let mut nu = ctx.mu.clone();
    let mut batch = ctx.new_batch(&nu, cfg.m, 0, 0, 0)?;
    let mut rho = cfg.rho;
    let mut alpha = alpha_hat(&batch, c);
    let mut gamma = empirical_quantile(&batch.scores, rho);
    ctx.trace.stages.push(StageSummary {
        level: batch.level_used,
        jmax: jmax_bound(gamma_star, gamma, alpha, cfg.delta),
        updates: 0,
        stalled: false,
    });
    let record = |j, batch: &SampleBatch, rho, gamma, alpha, nu: &F::Params| IterationRecord {
        stage: 0,
        j,
        level: batch.level_used,
        rho,
        m: batch.len(),
        gamma,
        alpha,
        nu: nu.clone(),
    };
    ctx.trace
        .records
        .push(record(0, &batch, rho, gamma, alpha, &nu));

    let mut j = 0;
    while gamma < gamma_star + alpha {
        j += 1;
        let threshold = relaxed_threshold(gamma, alpha, gamma_star);
        let members: Vec<bool> = batch.scores.iter().map(|&s| s >= threshold).collect();
        ctx.notify(UpdateEvent {
            kind: UpdateKind::Intermediate,
            stage: 0,
            j,
            level: batch.level_used,
            rho,
            gamma,
            alpha,
            threshold,
            points: &batch.points,
            scores: &batch.scores,
            bounds: &batch.bounds,
            members: &members,
        });
        let next = ctx.update(&batch, &members)?;
        ctx.trace.stages[0].updates = j;
        let mut fresh = ctx.new_batch(&next, batch.len(), 0, j, batch.level_used)?;
        let prev = PreviousIteration { gamma, alpha, rho };
        rho = select_level(ctx, &mut fresh, &next, prev, j)?;
        nu = next;
        batch = fresh;
        alpha = alpha_hat(&batch, c);
        gamma = empirical_quantile(&batch.scores, rho);
        ctx.trace
            .records
            .push(record(j, &batch, rho, gamma, alpha, &nu));
    }

    let big_j = j + 1;
    let members = screen_target_membership(ctx, &batch.points, &batch.scores, &batch.bounds, c);
    ctx.notify(UpdateEvent {
        kind: UpdateKind::Final,
        stage: 0,
        j: big_j,
        level: batch.level_used,
        rho,
        gamma,
        alpha,
        threshold: gamma_star,
        points: &batch.points,
        scores: &batch.scores,
        bounds: &batch.bounds,
        members: &members,
    });
    let nu_final = ctx.update(&batch, &members)?;
    ctx.trace.stages[0].updates = big_j;
    ctx.trace.final_nu = Some(nu_final.clone());
    let p = ctx.final_estimate(&nu_final, batch.len(), 0, big_j)?;
    Ok((nu_final, p))
}

/// Membership in the target event, decided from surrogate scores where the
/// certified bound settles it and by a high-fidelity call otherwise.
pub(crate) fn screen_target_membership<F, H>(
    ctx: &mut Ctx<'_, F, H>,
    points: &[ParameterPoint],
    scores: &[f64],
    bounds: &[f64],
    c: f64,
) -> Vec<bool>
where
    F: ProposalFamily,
    H: ScoreHierarchy + ?Sized,
{
    let gamma_star = ctx.config.gamma_star;
    let mut members = vec![false; points.len()];
    let mut undecided = Vec::new();
    for (i, (&s, &e)) in scores.iter().zip(bounds).enumerate() {
        if s >= gamma_star + c * e {
            members[i] = true;
        } else if s >= gamma_star - c * e {
            undecided.push(i);
        }
    }
    if !undecided.is_empty() {
        let band: Vec<ParameterPoint> = undecided.iter().map(|&i| points[i].clone()).collect();
        let top = ctx.top();
        let evals = ctx.evaluate(&band, top);
        for (&i, e) in undecided.iter().zip(&evals) {
            members[i] = e.score >= gamma_star;
        }
    }
    members
}
