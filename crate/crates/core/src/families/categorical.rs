use serde::{Deserialize, Serialize};

use super::{check_weights, ProposalFamily};
use crate::batch::ParameterPoint;
use crate::error::{MfceError, Result};
use crate::rng::RandomStream;

/// A distribution on a finite support; the zero-variance density `1_A μ / p_A`
/// of any event is a member of this family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalParams {
    pub support: Vec<ParameterPoint>,
    pub probs: Vec<f64>,
}

impl CategoricalParams {
    pub fn new(support: Vec<ParameterPoint>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(MfceError::InvalidParameter(
                "support and probabilities must be non-empty and aligned".into(),
            ));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(MfceError::InvalidParameter("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MfceError::InvalidParameter(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(CategoricalParams { support, probs })
    }

    /// Support `{[0], [1], …, [n−1]}` in one dimension.
    pub fn on_indices(probs: Vec<f64>) -> Result<Self> {
        let support = (0..probs.len())
            .map(|i| ParameterPoint::new(vec![i as f64]))
            .collect();
        Self::new(support, probs)
    }

    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.support.iter().position(|s| s.coords() == x)
    }

    pub fn probability_of(&self, set: impl Fn(usize) -> bool) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| set(*i))
            .map(|(_, p)| p)
            .sum()
    }
}

pub fn categorical_ce_update(
    support: &[ParameterPoint],
    weights: &[f64],
) -> Result<CategoricalParams> {
    let total = check_weights(support, weights)?;
    let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    // Renormalise once more so the sum is 1 to the last ulp or so.
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= s);
    Ok(CategoricalParams {
        support: support.to_vec(),
        probs,
    })
}

#[derive(Clone, Debug)]
pub struct CategoricalFamily {
    pub support: Vec<ParameterPoint>,
}

impl CategoricalFamily {
    pub fn new(support: Vec<ParameterPoint>) -> Self {
        CategoricalFamily { support }
    }
}

impl ProposalFamily for CategoricalFamily {
    type Params = CategoricalParams;

    fn log_density(&self, params: &CategoricalParams, x: &[f64]) -> Result<f64> {
        match params.index_of(x) {
            Some(i) => Ok(params.probs[i].ln()),
            None => Ok(f64::NEG_INFINITY),
        }
    }

    fn sample(
        &self,
        params: &CategoricalParams,
        stream: &mut RandomStream,
        m: usize,
    ) -> Result<Vec<ParameterPoint>> {
        let mut cdf = Vec::with_capacity(params.probs.len());
        let mut acc = 0.0;
        for &p in &params.probs {
            acc += p;
            cdf.push(acc);
        }
        let last_positive = params.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Ok((0..m)
            .map(|_| {
                let u = stream.uniform() * acc;
                let i = cdf.partition_point(|&c| c <= u).min(last_positive);
                params.support[i].clone()
            })
            .collect())
    }

    /// Weights of repeated support points are pooled before normalising.
    fn ce_update(&self, points: &[ParameterPoint], weights: &[f64]) -> Result<CategoricalParams> {
        check_weights(points, weights)?;
        let mut pooled = vec![0.0; self.support.len()];
        for (x, &w) in points.iter().zip(weights) {
            let i = self.support.iter().position(|s| s == x).ok_or_else(|| {
                MfceError::InvalidParameter(format!("{:?} is not a support point", x.coords()))
            })?;
            pooled[i] += w;
        }
        categorical_ce_update(&self.support, &pooled)
    }
}
