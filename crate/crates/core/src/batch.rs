use serde::{Deserialize, Serialize};
use std::ops::Deref;

/// A realisation `x ∈ ℝ^p` of the random input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        debug_assert!(
            coords.iter().all(|c| c.is_finite()),
            "non-finite coordinate"
        );
        ParameterPoint(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParameterPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterPoint {
    fn from(v: Vec<f64>) -> Self {
        ParameterPoint::new(v)
    }
}

/// The samples of one CE iteration together with their scores at
/// `level_used`, the per-point certified bounds and the log likelihood
/// ratios `ln μ(z) − ln ν(z)` against the proposal they were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<ParameterPoint>,
    pub scores: Vec<f64>,
    pub level_used: usize,
    pub bounds: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn check_consistent(&self) {
        debug_assert_eq!(self.points.len(), self.scores.len());
        debug_assert_eq!(self.points.len(), self.bounds.len());
        debug_assert_eq!(self.points.len(), self.log_weights.len());
    }
}
