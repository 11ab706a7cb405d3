use rayon::prelude::*;
use std::time::Instant;

use super::{
    CeConfig, CeFailure, CeObserver, CeOutcome, CeResult, CeTrace, PhaseTimings, UpdateEvent,
};
use crate::batch::{ParameterPoint, SampleBatch};
use crate::error::{MfceError, Result};
use crate::estimators::is_estimate_from_log_weights;
use crate::families::{combine_log_ratio, ProposalFamily};
use crate::hierarchy::{LevelEval, ScoreHierarchy};
use crate::quantile::GrowableSample;
use crate::rng::{derive_substream, purpose};

const PAR_MIN_LEN: usize = 16;

pub(crate) struct Ctx<'a, F: ProposalFamily, H: ScoreHierarchy + ?Sized> {
    pub family: &'a F,
    pub hierarchy: &'a H,
    pub mu: &'a F::Params,
    pub config: &'a CeConfig,
    pub trace: CeTrace<F::Params>,
    pub timings: PhaseTimings,
    pub observer: &'a mut dyn CeObserver,
    started: Instant,
}

impl<'a, F: ProposalFamily, H: ScoreHierarchy + ?Sized> Ctx<'a, F, H> {
    pub fn new(
        family: &'a F,
        hierarchy: &'a H,
        mu: &'a F::Params,
        config: &'a CeConfig,
        observer: &'a mut dyn CeObserver,
    ) -> Self {
        let levels = hierarchy.level_count();
        Ctx {
            family,
            hierarchy,
            mu,
            config,
            trace: CeTrace::new(levels),
            timings: PhaseTimings {
                scoring: vec![0.0; levels],
                ..Default::default()
            },
            observer,
            started: Instant::now(),
        }
    }

    pub fn top(&self) -> usize {
        self.hierarchy.top_level()
    }

    pub fn finish(mut self, result: Result<(F::Params, f64)>) -> CeResult<F::Params> {
        self.timings.total = self.started.elapsed().as_secs_f64();
        match result {
            Ok((nu, p_hat)) => {
                self.trace.p_hat = Some(p_hat);
                Ok(CeOutcome {
                    nu,
                    p_hat,
                    trace: self.trace,
                    timings: self.timings,
                })
            }
            Err(error) => Err(CeFailure {
                error,
                trace: self.trace,
                timings: self.timings,
            }),
        }
    }

    /// Draws `n` points from `nu` on the substream `path` and computes their
    /// log likelihood ratios against `μ`.
    fn draw(
        &mut self,
        nu: &F::Params,
        n: usize,
        path: &[u64],
    ) -> Result<(Vec<ParameterPoint>, Vec<f64>)> {
        let t = Instant::now();
        let mut stream = derive_substream(self.config.seed, path);
        let points = self.family.sample(nu, &mut stream, n)?;
        let lm = self.family.log_densities(self.mu, &points)?;
        let ln = self.family.log_densities(nu, &points)?;
        let log_weights = points
            .iter()
            .zip(lm.iter().zip(&ln))
            .map(|(x, (&a, &b))| combine_log_ratio(a, b, x))
            .collect::<Result<Vec<f64>>>()?;
        self.timings.sampling += t.elapsed().as_secs_f64();
        Ok((points, log_weights))
    }

    pub fn evaluate(&mut self, points: &[ParameterPoint], level: usize) -> Vec<LevelEval> {
        let t = Instant::now();
        let h = self.hierarchy;
        let evals: Vec<LevelEval> = points
            .par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|x| h.evaluate(x, level))
            .collect();
        self.trace.evaluations[level] += points.len() as u64;
        self.timings.scoring[level] += t.elapsed().as_secs_f64();
        evals
    }

    pub fn new_batch(
        &mut self,
        nu: &F::Params,
        n: usize,
        stage: usize,
        j: usize,
        level: usize,
    ) -> Result<SampleBatch> {
        let (points, log_weights) =
            self.draw(nu, n, &[stage as u64, j as u64, purpose::DRAW, 0])?;
        let evals = self.evaluate(&points, level);
        Ok(SampleBatch {
            points,
            scores: evals.iter().map(|e| e.score).collect(),
            bounds: evals.iter().map(|e| e.bound).collect(),
            level_used: level,
            log_weights,
        })
    }

    pub fn rescore(&mut self, batch: &mut SampleBatch, level: usize) {
        let evals = self.evaluate(&batch.points, level);
        batch.scores = evals.iter().map(|e| e.score).collect();
        batch.bounds = evals.iter().map(|e| e.bound).collect();
        batch.level_used = level;
    }

    /// Weighted CE fit with weights `1_member(z) μ(z)/ν(z)`, rescaled by the
    /// largest member weight (the update is scale-free).
    pub fn update(&mut self, batch: &SampleBatch, members: &[bool]) -> Result<F::Params> {
        batch.check_consistent();
        let t = Instant::now();
        let max_lw = batch
            .log_weights
            .iter()
            .zip(members)
            .filter(|(_, &m)| m)
            .map(|(lw, _)| *lw)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_lw == f64::NEG_INFINITY {
            return Err(MfceError::DegenerateUpdate);
        }
        let weights: Vec<f64> = batch
            .log_weights
            .iter()
            .zip(members)
            .map(|(lw, &m)| if m { (lw - max_lw).exp() } else { 0.0 })
            .collect();
        let nu = self.family.ce_update(&batch.points, &weights);
        self.timings.ce_update += t.elapsed().as_secs_f64();
        self.trace.updates_per_level[batch.level_used] += 1;
        nu
    }

    pub fn notify(&mut self, event: UpdateEvent<'_>) {
        self.observer.on_update(&event);
    }

    /// Draws the final `m` points from `nu`, scores them with the
    /// high-fidelity model and returns the IS estimate.
    pub fn final_estimate(
        &mut self,
        nu: &F::Params,
        m: usize,
        stage: usize,
        big_j: usize,
    ) -> Result<f64> {
        let t = Instant::now();
        let (points, log_weights) =
            self.draw(nu, m, &[stage as u64, big_j as u64, purpose::FINAL, 0])?;
        let top = self.top();
        let evals = self.evaluate(&points, top);
        let gamma_star = self.config.gamma_star;
        let hits: Vec<bool> = evals.iter().map(|e| e.score >= gamma_star).collect();
        let p = is_estimate_from_log_weights(&log_weights, &hits);
        self.trace.final_m = m;
        self.timings.final_is += t.elapsed().as_secs_f64();
        Ok(p)
    }
}

/// A batch that grows by drawing further blocks from its proposal.
pub(crate) struct Grower<'g, 'a, F: ProposalFamily, H: ScoreHierarchy + ?Sized> {
    pub ctx: &'g mut Ctx<'a, F, H>,
    pub batch: &'g mut SampleBatch,
    pub nu: &'g F::Params,
    pub stage: usize,
    pub j: usize,
    pub next_block: &'g mut u64,
}

impl<F: ProposalFamily, H: ScoreHierarchy + ?Sized> GrowableSample for Grower<'_, '_, F, H> {
    fn scores(&self) -> &[f64] {
        &self.batch.scores
    }

    fn grow(&mut self, extra: usize) -> Result<()> {
        let path = [
            self.stage as u64,
            self.j as u64,
            purpose::GROW,
            *self.next_block,
        ];
        *self.next_block += 1;
        let (points, log_weights) = self.ctx.draw(self.nu, extra, &path)?;
        let evals = self.ctx.evaluate(&points, self.batch.level_used);
        self.batch.points.extend(points);
        self.batch.log_weights.extend(log_weights);
        self.batch.scores.extend(evals.iter().map(|e| e.score));
        self.batch.bounds.extend(evals.iter().map(|e| e.bound));
        Ok(())
    }
}
