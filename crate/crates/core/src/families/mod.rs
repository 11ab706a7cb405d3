//! Parametric proposal families and their closed-form CE updates.

mod categorical;
mod gaussian;

pub use categorical::{categorical_ce_update, CategoricalFamily, CategoricalParams};
pub use gaussian::{
    gaussian_ce_update, gaussian_log_density, gaussian_sample, FactoredGaussian, GaussianFamily,
    GaussianParams, DEFAULT_FLOOR,
};

use crate::batch::ParameterPoint;
use crate::error::{MfceError, Result};
use crate::rng::RandomStream;

/// A family `V = {ν^θ}` of proposal densities.
pub trait ProposalFamily: Sync {
    type Params: Clone + std::fmt::Debug + PartialEq + Send + Sync;

    fn log_density(&self, params: &Self::Params, x: &[f64]) -> Result<f64>;

    fn log_densities(&self, params: &Self::Params, points: &[ParameterPoint]) -> Result<Vec<f64>> {
        points.iter().map(|x| self.log_density(params, x)).collect()
    }

    fn sample(
        &self,
        params: &Self::Params,
        stream: &mut RandomStream,
        m: usize,
    ) -> Result<Vec<ParameterPoint>>;

    /// Maximiser of `Σ w_i ln ν^θ(z_i)` over the family. Invariant under a
    /// common positive rescaling of the weights.
    fn ce_update(&self, points: &[ParameterPoint], weights: &[f64]) -> Result<Self::Params>;
}

/// `μ(x)/ν(x)`, evaluated through the difference of log-densities.
pub fn likelihood_ratio<F: ProposalFamily>(
    family: &F,
    mu: &F::Params,
    nu: &F::Params,
    x: &[f64],
) -> Result<f64> {
    let log_ratio = log_likelihood_ratio(family, mu, nu, x)?;
    Ok(log_ratio.exp())
}

pub fn log_likelihood_ratio<F: ProposalFamily>(
    family: &F,
    mu: &F::Params,
    nu: &F::Params,
    x: &[f64],
) -> Result<f64> {
    let lm = family.log_density(mu, x)?;
    let ln = family.log_density(nu, x)?;
    combine_log_ratio(lm, ln, x)
}

pub(crate) fn combine_log_ratio(log_mu: f64, log_nu: f64, x: &[f64]) -> Result<f64> {
    if log_mu == f64::NEG_INFINITY {
        // Outside supp(μ): the ratio is zero whatever ν does.
        return Ok(f64::NEG_INFINITY);
    }
    if !log_nu.is_finite() {
        return Err(MfceError::DominationViolation { x: x.to_vec() });
    }
    Ok(log_mu - log_nu)
}

pub(crate) fn check_weights(points: &[ParameterPoint], weights: &[f64]) -> Result<f64> {
    if points.len() != weights.len() {
        return Err(MfceError::InvalidParameter(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(MfceError::InvalidParameter(format!(
                "weight {w} is not a finite nonnegative number"
            )));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(MfceError::DegenerateUpdate);
    }
    Ok(total)
}
