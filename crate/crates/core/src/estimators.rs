//! Naive Monte-Carlo and importance-sampling estimators, and SCV diagnostics.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::batch::ParameterPoint;
use crate::error::Result;
use crate::families::{combine_log_ratio, ProposalFamily};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

pub fn mc_estimate(points: &[ParameterPoint], indicator: impl Fn(&[f64]) -> bool) -> f64 {
    assert!(!points.is_empty());
    points.iter().filter(|x| indicator(x)).count() as f64 / points.len() as f64
}

/// `(1/m) Σ 1_A(z_i) μ(z_i)/ν(z_i)` for points drawn from `nu`.
pub fn is_estimate<F: ProposalFamily>(
    family: &F,
    mu: &F::Params,
    nu: &F::Params,
    points: &[ParameterPoint],
    indicator: impl Fn(&[f64]) -> bool,
) -> Result<f64> {
    let hits: Vec<bool> = points.iter().map(|x| indicator(x)).collect();
    is_estimate_from_hits(family, mu, nu, points, &hits)
}

pub fn is_estimate_from_hits<F: ProposalFamily>(
    family: &F,
    mu: &F::Params,
    nu: &F::Params,
    points: &[ParameterPoint],
    hits: &[bool],
) -> Result<f64> {
    assert_eq!(points.len(), hits.len());
    assert!(!points.is_empty());
    let hit_points: Vec<ParameterPoint> = points
        .iter()
        .zip(hits)
        .filter(|(_, &h)| h)
        .map(|(x, _)| x.clone())
        .collect();
    let lm = family.log_densities(mu, &hit_points)?;
    let ln = family.log_densities(nu, &hit_points)?;
    let mut acc = CompensatedSum::default();
    for ((x, a), b) in hit_points.iter().zip(lm).zip(ln) {
        acc.add(combine_log_ratio(a, b, x)?.exp());
    }
    Ok(acc.value() / points.len() as f64)
}

/// `log_weights` are `ln μ(z_i) − ln ν(z_i)` computed when the batch was drawn.
pub fn is_estimate_from_log_weights(log_weights: &[f64], hits: &[bool]) -> f64 {
    assert_eq!(log_weights.len(), hits.len());
    let acc: CompensatedSum = log_weights
        .iter()
        .zip(hits)
        .filter(|(_, &h)| h)
        .map(|(lw, _)| lw.exp())
        .collect();
    acc.value() / log_weights.len() as f64
}

/// Mean of `(p̂_r − p_ref)² / p_ref²`.
pub fn empirical_scv(estimates: &[f64], p_ref: f64) -> f64 {
    assert!(p_ref > 0.0 && estimates.len() >= 2);
    let acc: CompensatedSum = estimates
        .iter()
        .map(|p| ((p - p_ref) / p_ref).powi(2))
        .collect();
    acc.value() / estimates.len() as f64
}

/// SCV `(p_{Â∖A} + p_{Â⁽ᵏ⁾∖Â}) / (m p_A)` of the IS estimator whose proposal
/// is the zero-variance density of the relaxed set `Â⁽ᵏ⁾ ⊇ Â ⊇ A`.
pub fn theoretical_scv(m: usize, p_a: f64, p_rel_extra: f64, p_nest_extra: f64) -> f64 {
    assert!(p_a > 0.0 && p_rel_extra >= 0.0 && p_nest_extra >= 0.0);
    (p_nest_extra + p_rel_extra) / (m as f64 * p_a)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_standard_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Outcome of one estimation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub p_hat: f64,
    pub m_final: usize,
    /// Model calls keyed by level label (`d<k>` or `hifi`).
    pub per_level_evals: BTreeMap<String, u64>,
    pub hf_evals: u64,
    /// CE iterations spent per level label.
    pub per_level_iterations: BTreeMap<String, usize>,
    pub wall_clock_s: PhaseSeconds,
    pub trace_summary: Vec<TraceRow>,
    pub jmax: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeconds {
    pub sampling: f64,
    pub scoring: BTreeMap<String, f64>,
    pub ce_update: f64,
    pub final_is: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: usize,
    pub j: usize,
    pub level: String,
    pub rho: f64,
    pub m: usize,
    pub gamma: f64,
    pub alpha: f64,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Aggregate over repetitions of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub algorithm: String,
    pub levels: Vec<String>,
    pub m: usize,
    /// `NaN` (written as `null`) when no repetition succeeded.
    #[serde(with = "nan_as_null")]
    pub p_hat: f64,
    /// `NaN` (written as `null`) with fewer than two successful repetitions.
    #[serde(with = "nan_as_null")]
    pub p_hat_standard_error: f64,
    pub p_ref: Option<f64>,
    pub empirical_scv: Option<f64>,
    pub m_final: usize,
    pub per_level_evals: BTreeMap<String, f64>,
    pub mean_wall_clock_s: f64,
    pub runs: Vec<RunSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{CategoricalFamily, CategoricalParams, GaussianFamily, GaussianParams};
    use crate::rng::derive_substream;

    fn pts(n: usize) -> Vec<ParameterPoint> {
        (0..n)
            .map(|i| ParameterPoint::new(vec![i as f64]))
            .collect()
    }

    #[test]
    fn naive_mc_counts() {
        let p = pts(10);
        assert_eq!(mc_estimate(&p, |_| true), 1.0);
        assert_eq!(mc_estimate(&p, |_| false), 0.0);
        assert!((mc_estimate(&p, |x| x[0] < 3.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn is_with_unit_weights_equals_mc() {
        let fam = GaussianFamily::default();
        let mu = GaussianParams::standard(1);
        let xs = fam_sample(&fam, &mu, 500, 1);
        let ind = |x: &[f64]| x[0] > 0.5;
        let a = is_estimate(&fam, &mu, &mu, &xs, ind).unwrap();
        assert!((a - mc_estimate(&xs, ind)).abs() < 1e-14);
        assert_eq!(is_estimate(&fam, &mu, &mu, &xs, |_| false).unwrap(), 0.0);
    }

    fn fam_sample(
        fam: &GaussianFamily,
        p: &GaussianParams,
        m: usize,
        seed: u64,
    ) -> Vec<ParameterPoint> {
        use crate::families::ProposalFamily;
        fam.sample(p, &mut derive_substream(seed, &[0]), m).unwrap()
    }

    #[test]
    fn shifted_proposal_recovers_gaussian_tail() {
        let fam = GaussianFamily::default();
        let mu = GaussianParams::standard(1);
        let nu = GaussianParams::isotropic(vec![3.0], 1.0);
        let m = 10_000;
        let xs = fam_sample(&fam, &nu, m, 17);
        let est = is_estimate(&fam, &mu, &nu, &xs, |x| x[0] >= 3.0).unwrap();
        // Per-sample second moment of 1_{x≥3} e^{-3x+4.5} under N(3,1), by the
        // same estimator, gives the standard error.
        let w2: f64 = xs
            .iter()
            .filter(|x| x[0] >= 3.0)
            .map(|x| (-3.0 * x[0] + 4.5f64).exp().powi(2))
            .sum::<f64>()
            / m as f64;
        let se = ((w2 - est * est) / m as f64).sqrt();
        let truth = 1.3498980316300946e-3;
        assert!((est - truth).abs() < 3.0 * se, "est {est} se {se}");
    }

    #[test]
    fn scv_examples() {
        let p = 0.02;
        assert_eq!(empirical_scv(&[p, p, p], p), 0.0);
        assert!((empirical_scv(&[0.9 * p, 1.1 * p], p) - 0.01).abs() < 1e-12);
        assert!((empirical_scv(&[2.0 * p, 2.0 * p], p) - 1.0).abs() < 1e-12);
        assert_eq!(theoretical_scv(10, 0.1, 0.0, 0.0), 0.0);
        assert!((theoretical_scv(100, 0.01, 0.04, 0.05) - 0.09).abs() < 1e-12);
        assert!((theoretical_scv(50, 0.1, 0.0, 0.2) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_categorical_is_exact() {
        let mu = CategoricalParams::on_indices(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let fam = CategoricalFamily::new(mu.support.clone());
        let nu = CategoricalParams::on_indices(vec![0.0, 0.0, 2.0 / 3.0, 1.0 / 3.0]).unwrap();
        for seed in 0..20 {
            let xs = crate::families::ProposalFamily::sample(
                &fam,
                &nu,
                &mut derive_substream(seed, &[0]),
                37,
            )
            .unwrap();
            let est = is_estimate(&fam, &mu, &nu, &xs, |x| x[0] >= 2.0).unwrap();
            assert!((est - 0.3).abs() < 1e-14, "{est}");
        }
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..10_000 {
            s.add(1e-16);
        }
        assert!((s.value() - (1.0 + 1e-12)).abs() < 1e-20);
    }
}
