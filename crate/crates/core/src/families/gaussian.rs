use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_weights, ProposalFamily};
use crate::batch::ParameterPoint;
use crate::error::{MfceError, Result};
use crate::rng::RandomStream;

/// Default covariance eigenvalue floor.
pub const DEFAULT_FLOOR: f64 = 5e-5;

/// Mean and covariance of a `p`-variate normal proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    /// Row-major `p × p`.
    pub covariance: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let p = mean.len();
        if p == 0 || covariance.len() != p * p {
            return Err(MfceError::InvalidParameter(format!(
                "covariance has {} entries for dimension {p}",
                covariance.len()
            )));
        }
        Ok(GaussianParams { mean, covariance })
    }

    pub fn standard(p: usize) -> Self {
        Self::isotropic(vec![0.0; p], 1.0)
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Self {
        let p = mean.len();
        let mut covariance = vec![0.0; p * p];
        for i in 0..p {
            covariance[i * p + i] = variance;
        }
        GaussianParams { mean, covariance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        DMatrix::from_row_slice(p, p, &self.covariance)
    }

    /// Cholesky factorisation used for density evaluation and sampling.
    pub fn factor(&self) -> Result<FactoredGaussian> {
        let p = self.dim();
        let cov = self.covariance_matrix();
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-9 * cov.amax().max(1.0) {
            return Err(MfceError::InvalidParameter(
                "covariance is not symmetric".into(),
            ));
        }
        let chol = Cholesky::new(cov).ok_or_else(|| {
            MfceError::InvalidParameter("covariance is not positive definite".into())
        })?;
        let l = chol.l();
        let log_det = 2.0 * (0..p).map(|i| l[(i, i)].ln()).sum::<f64>();
        Ok(FactoredGaussian {
            mean: DVector::from_column_slice(&self.mean),
            chol,
            log_norm: -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }
}

pub struct FactoredGaussian {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl FactoredGaussian {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * y.norm_squared()
    }

    pub fn sample(&self, stream: &mut RandomStream) -> ParameterPoint {
        let p = self.mean.len();
        let xi = DVector::from_fn(p, |_, _| stream.standard_normal());
        let l = self.chol.l();
        ParameterPoint::new((&self.mean + l * xi).as_slice().to_vec())
    }
}

pub fn gaussian_log_density(params: &GaussianParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.dim() {
        return Err(MfceError::InvalidParameter(format!(
            "point of dimension {} for a {}-variate normal",
            x.len(),
            params.dim()
        )));
    }
    Ok(params.factor()?.log_density(x))
}

pub fn gaussian_sample(
    params: &GaussianParams,
    stream: &mut RandomStream,
    m: usize,
) -> Result<Vec<ParameterPoint>> {
    let f = params.factor()?;
    Ok((0..m).map(|_| f.sample(stream)).collect())
}

/// Weighted maximum-likelihood normal: weighted mean, `1/Σw`-normalised
/// weighted scatter about it, eigenvalues clamped from below at `floor`.
pub fn gaussian_ce_update(
    points: &[ParameterPoint],
    weights: &[f64],
    floor: f64,
) -> Result<GaussianParams> {
    let total = check_weights(points, weights)?;
    let p = points[0].dim();
    let mut mean = DVector::<f64>::zeros(p);
    for (x, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            mean += DVector::from_column_slice(x) * (w / total);
        }
    }
    let mut scatter = DMatrix::<f64>::zeros(p, p);
    for (x, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            let d = DVector::from_column_slice(x) - &mean;
            scatter.ger(w / total, &d, &d, 1.0);
        }
    }
    let cov = floor_eigenvalues(scatter, floor);
    let mut row_major = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            row_major.push(cov[(i, j)]);
        }
    }
    Ok(GaussianParams {
        mean: mean.as_slice().to_vec(),
        covariance: row_major,
    })
}

fn floor_eigenvalues(mut m: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    (&out + out.transpose()) * 0.5
}

/// The normal family with a covariance eigenvalue floor.
#[derive(Clone, Debug)]
pub struct GaussianFamily {
    pub floor: f64,
}

impl Default for GaussianFamily {
    fn default() -> Self {
        GaussianFamily {
            floor: DEFAULT_FLOOR,
        }
    }
}

impl ProposalFamily for GaussianFamily {
    type Params = GaussianParams;

    fn log_density(&self, params: &GaussianParams, x: &[f64]) -> Result<f64> {
        gaussian_log_density(params, x)
    }

    fn log_densities(
        &self,
        params: &GaussianParams,
        points: &[ParameterPoint],
    ) -> Result<Vec<f64>> {
        let f = params.factor()?;
        Ok(points.iter().map(|x| f.log_density(x)).collect())
    }

    fn sample(
        &self,
        params: &GaussianParams,
        stream: &mut RandomStream,
        m: usize,
    ) -> Result<Vec<ParameterPoint>> {
        gaussian_sample(params, stream, m)
    }

    fn ce_update(&self, points: &[ParameterPoint], weights: &[f64]) -> Result<GaussianParams> {
        gaussian_ce_update(points, weights, self.floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::likelihood_ratio;
    use crate::rng::derive_substream;

    fn pts(v: &[f64]) -> Vec<ParameterPoint> {
        v.iter().map(|&x| ParameterPoint::new(vec![x])).collect()
    }

    #[test]
    fn log_density_closed_forms() {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let d = gaussian_log_density(&GaussianParams::standard(1), &[0.0]).unwrap();
        assert!((d + half_ln_2pi).abs() < 1e-14);
        assert!((d + 0.9189385332).abs() < 1e-9);
        let shifted = GaussianParams::isotropic(vec![1.7], 1.0);
        assert!((gaussian_log_density(&shifted, &[1.7]).unwrap() - d).abs() < 1e-14);
        let d2 = gaussian_log_density(&GaussianParams::standard(2), &[0.0, 0.0]).unwrap();
        assert!((d2 + 2.0 * half_ln_2pi).abs() < 1e-14);
        assert!((d2 + 1.8378770664).abs() < 1e-9);
    }

    #[test]
    fn non_pd_covariance_rejected() {
        let bad = GaussianParams::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            gaussian_log_density(&bad, &[0.0, 0.0]),
            Err(MfceError::InvalidParameter(_))
        ));
        let dim = gaussian_log_density(&GaussianParams::standard(2), &[0.0]);
        assert!(dim.is_err());
    }

    #[test]
    fn ce_update_hand_examples() {
        let g = gaussian_ce_update(&pts(&[0.0, 2.0]), &[1.0, 1.0], 1e-6).unwrap();
        assert!((g.mean[0] - 1.0).abs() < 1e-14 && (g.covariance[0] - 1.0).abs() < 1e-12);
        let g = gaussian_ce_update(&pts(&[0.0, 3.0]), &[1.0, 2.0], 1e-6).unwrap();
        assert!((g.mean[0] - 2.0).abs() < 1e-14 && (g.covariance[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_weight_collapses_to_floor() {
        let p3: Vec<ParameterPoint> = vec![vec![1.0, 2.0, 3.0].into(), vec![0.0, 0.0, 0.0].into()];
        let g = gaussian_ce_update(&p3, &[0.0, 4.0], 1e-3).unwrap();
        assert_eq!(g.mean, vec![0.0, 0.0, 0.0]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1e-3 } else { 0.0 };
                assert!((g.covariance[i * 3 + j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn all_zero_weights_is_degenerate() {
        let r = gaussian_ce_update(&pts(&[0.0, 1.0]), &[0.0, 0.0], 1e-6);
        assert!(matches!(r, Err(MfceError::DegenerateUpdate)));
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let m = 100_000;
        let p = GaussianParams::standard(2);
        let a = gaussian_sample(&p, &mut derive_substream(9, &[0]), m).unwrap();
        let b = gaussian_sample(&p, &mut derive_substream(9, &[0]), m).unwrap();
        assert_eq!(a, b);
        for c in 0..2 {
            let mean = a.iter().map(|x| x[c]).sum::<f64>() / m as f64;
            assert!(
                mean.abs() < 3.0 / (m as f64).sqrt(),
                "coordinate {c} mean {mean}"
            );
        }
        let floor = 5e-5;
        let tight = GaussianParams::isotropic(vec![0.0, 0.0], floor);
        let s = gaussian_sample(&tight, &mut derive_substream(9, &[1]), m).unwrap();
        let var = s.iter().map(|x| x[0] * x[0]).sum::<f64>() / m as f64;
        assert!((var / floor - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn likelihood_ratio_examples() {
        let fam = GaussianFamily::default();
        let mu = GaussianParams::standard(1);
        let nu = GaussianParams::isotropic(vec![1.0], 1.0);
        assert!((likelihood_ratio(&fam, &mu, &mu, &[0.3]).unwrap() - 1.0).abs() < 1e-15);
        let r = likelihood_ratio(&fam, &mu, &nu, &[0.0]).unwrap();
        assert!((r - 0.5f64.exp()).abs() < 1e-12);
        assert!((r - 1.6487).abs() < 1e-4);
    }
}
