//! POD reduced-basis hierarchy: nested Galerkin approximations with
//! residual-based error bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

use super::banded::BandedLu;
use super::problem::{
    check_parameter, norm2, solve_high_fidelity_with, sup_norm_score, AdrProblem, VelocityBasis,
};
use crate::batch::ParameterPoint;
use crate::error::{MfceError, Result};
use crate::hierarchy::{LevelEval, ScoreHierarchy};
use crate::rng::derive_substream;

/// Safety factor applied to the smallest sampled singular value.
pub const STABILITY_SAFETY: f64 = 0.9;

const ORTHONORMALITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundProvider {
    /// `‖r‖₂ / stability_floor`.
    #[default]
    Residual,
    /// `‖f* − f^(k)‖₂` from a full solve; for testing only.
    ExactOracle,
    /// Dual-norm bound on `‖f* − f^(k)‖∞` from the coercivity of the
    /// symmetric part: `‖e‖_D ≤ ‖r‖_{D⁻¹}` and `|e_i| ≤ √(D⁻¹)_ii ‖e‖_D`.
    /// Needs no sampled stability constant and is far tighter than
    /// [`BoundProvider::Residual`] for the sup-norm score.
    Coercive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbSolution {
    pub field: Vec<f64>,
    /// `A(x) f^(k) − s(x)` in the full space.
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    /// The reduced system was singular and solved in the least-squares sense.
    pub least_squares: bool,
}

#[derive(Debug)]
pub struct PodHierarchy {
    problem: AdrProblem,
    velocity: VelocityBasis,
    basis: DMatrix<f64>,
    dims: Vec<usize>,
    stability_floor: f64,
    singular_values: Vec<f64>,
    provider: BoundProvider,
    /// `VᵀDV` followed by `VᵀK_cV` per velocity component, row-major
    /// `d_K × d_K`.
    reduced_ops: Vec<Vec<f64>>,
    dr_lu: BandedLu,
    dual_sup_constant: f64,
    least_squares_solves: AtomicU64,
}

/// `count` parameters drawn from `N(mean, spread² I)`.
pub fn snapshot_parameters(
    mean: &[f64],
    spread: f64,
    count: usize,
    seed: u64,
) -> Vec<ParameterPoint> {
    let mut stream = derive_substream(seed, &[u64::MAX, 0]);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = mean
                .iter()
                .map(|m| m + spread * stream.standard_normal())
                .collect();
            ParameterPoint::new(v)
        })
        .collect()
}

fn check_dims(dims: &[usize], available: usize) -> Result<()> {
    if dims.is_empty() || dims[0] == 0 || dims.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MfceError::config(
            "levels",
            "reduced dimensions must be positive and strictly increasing",
        ));
    }
    let top = *dims.last().unwrap();
    if top > available {
        return Err(MfceError::RankDeficient {
            requested: top,
            rank: available,
        });
    }
    Ok(())
}

/// Leading `d` left singular vectors of `snapshots` and all singular values,
/// both in decreasing order of the singular value.
pub fn pod_basis(snapshots: &DMatrix<f64>, d: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = snapshots.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let tol = sv.first().copied().unwrap_or(0.0)
        * f64::EPSILON
        * snapshots.nrows().max(snapshots.ncols()) as f64;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < d {
        return Err(MfceError::RankDeficient { requested: d, rank });
    }
    Ok((
        DMatrix::from_fn(snapshots.nrows(), d, |i, j| u[(i, order[j])]),
        sv,
    ))
}

/// Solves `a x = b` in place by LU without pivoting (`a` row-major
/// `n × n`). Galerkin matrices of `A(x)` have a positive definite symmetric
/// part, for which no pivoting is needed; returns `false` on a vanishing or
/// non-finite pivot so the caller can fall back.
fn lu_solve_in_place(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..n {
        let pivot = a[k * n + k];
        if !(pivot.abs() > 1e-13 * scale) {
            return false;
        }
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let pivot_row = &head[k * n + k + 1..(k + 1) * n];
        for (i, row) in tail.chunks_exact_mut(n).enumerate() {
            let l = row[k] / pivot;
            row[k] = l;
            row[k + 1..]
                .iter_mut()
                .zip(pivot_row)
                .for_each(|(r, p)| *r -= l * p);
            b[k + 1 + i] -= l * b[k];
        }
    }
    for k in (0..n).rev() {
        let row = &a[k * n..(k + 1) * n];
        let acc: f64 = row[k + 1..]
            .iter()
            .zip(&b[k + 1..])
            .map(|(r, x)| r * x)
            .sum();
        b[k] = (b[k] - acc) / row[k];
    }
    b.iter().all(|v| v.is_finite())
}

impl PodHierarchy {
    /// Snapshots at `params`, their leading left singular vectors as the
    /// basis, and the stability floor calibrated on the same parameters.
    pub fn build(
        problem: &AdrProblem,
        params: &[ParameterPoint],
        dims: Vec<usize>,
    ) -> Result<Self> {
        problem.validate()?;
        check_dims(&dims, params.len())?;
        let q = problem.dofs();
        let velocity = problem.velocity_basis();
        let columns = params
            .par_iter()
            .map(|x| solve_high_fidelity_with(problem, &velocity, x))
            .collect::<Result<Vec<_>>>()?;
        let snapshots = DMatrix::from_fn(q, params.len(), |i, j| columns[j][i]);
        let (basis, sv) = pod_basis(&snapshots, *dims.last().unwrap())?;
        let floor = params
            .par_iter()
            .map(|x| problem.smallest_singular_value_with(&velocity, x))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min)
            * STABILITY_SAFETY;
        Self::from_basis(problem, basis, dims, floor, sv)
    }

    /// Wraps a precomputed orthonormal basis.
    pub fn from_basis(
        problem: &AdrProblem,
        basis: DMatrix<f64>,
        dims: Vec<usize>,
        stability_floor: f64,
        singular_values: Vec<f64>,
    ) -> Result<Self> {
        problem.validate()?;
        let q = problem.dofs();
        if basis.nrows() != q {
            return Err(MfceError::InvalidParameter(format!(
                "basis has {} rows, the problem has {q} unknowns",
                basis.nrows()
            )));
        }
        check_dims(&dims, basis.ncols())?;
        let basis = basis.columns(0, *dims.last().unwrap()).into_owned();
        let gram = basis.tr_mul(&basis);
        let defect = (gram - DMatrix::identity(basis.ncols(), basis.ncols())).amax();
        if defect > ORTHONORMALITY_TOL {
            return Err(MfceError::InvalidParameter(format!(
                "basis is not orthonormal (defect {defect:.2e})"
            )));
        }
        if !(stability_floor > 0.0) {
            return Err(MfceError::InvalidParameter(
                "stability floor must be positive".into(),
            ));
        }
        let velocity = problem.velocity_basis();
        let d = basis.ncols();
        let project = |apply: &(dyn Fn(&[f64], &mut [f64]) + Sync)| {
            let cols: Vec<Vec<f64>> = (0..d)
                .into_par_iter()
                .map(|c| {
                    let mut out = vec![0.0; q];
                    apply(basis.column(c).as_slice(), &mut out);
                    out
                })
                .collect();
            basis.tr_mul(&DMatrix::from_fn(q, d, |i, j| cols[j][i]))
        };
        let row_major = |m: DMatrix<f64>| m.transpose().as_slice().to_vec();
        let mut reduced_ops = vec![row_major(project(&|f, out| {
            problem.apply_diffusion_reaction(f, out)
        }))];
        reduced_ops.extend(
            velocity
                .components
                .iter()
                .map(|vel| row_major(project(&|f, out| problem.apply_advection(vel, f, out)))),
        );
        let dr_lu = problem.factor_diffusion_reaction()?;
        let max_diag = (0..q)
            .into_par_iter()
            .map(|i| {
                let mut e = vec![0.0; q];
                e[i] = 1.0;
                dr_lu.solve(&mut e);
                e[i]
            })
            .reduce(|| 0.0, f64::max);
        Ok(PodHierarchy {
            problem: problem.clone(),
            velocity,
            basis,
            dims,
            stability_floor,
            singular_values,
            provider: BoundProvider::Residual,
            reduced_ops,
            dr_lu,
            dual_sup_constant: max_diag.sqrt(),
            least_squares_solves: AtomicU64::new(0),
        })
    }

    pub fn with_provider(mut self, provider: BoundProvider) -> Self {
        self.provider = provider;
        self
    }

    pub fn problem(&self) -> &AdrProblem {
        &self.problem
    }

    /// The `q × d_K` orthonormal basis; level `k` uses its first `d_k` columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn stability_floor(&self) -> f64 {
        self.stability_floor
    }

    /// Snapshot singular values in decreasing order (empty if the basis was
    /// supplied directly).
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn provider(&self) -> BoundProvider {
        self.provider
    }

    /// `max_i √(D⁻¹)_ii`, the sup-norm constant of the coercive bound.
    pub fn dual_sup_constant(&self) -> f64 {
        self.dual_sup_constant
    }

    /// Reduced solves that fell back to least squares so far.
    pub fn least_squares_solves(&self) -> u64 {
        self.least_squares_solves.load(Ordering::Relaxed)
    }

    pub fn solve_high_fidelity(&self, x: &[f64]) -> Result<Vec<f64>> {
        solve_high_fidelity_with(&self.problem, &self.velocity, x)
    }

    /// Galerkin solve in the first `d_k` basis vectors at 0-based surrogate
    /// `level`, lifted to the full space, with its full-order residual norm.
    pub fn rb_solve(&self, x: &[f64], level: usize) -> Result<RbSolution> {
        check_parameter(&self.problem, x)?;
        let dk = *self.dims.get(level).ok_or_else(|| {
            MfceError::InvalidParameter(format!("level {level} is not a reduced level"))
        })?;
        let coefs = self.problem.velocity_coefficients(x);
        let stride = self.basis.ncols();
        let mut a = vec![0.0; dk * dk];
        for (op, theta) in self
            .reduced_ops
            .iter()
            .zip(std::iter::once(&1.0).chain(&coefs))
        {
            if *theta == 0.0 {
                continue;
            }
            for (row, src) in a.chunks_exact_mut(dk).zip(op.chunks_exact(stride)) {
                row.iter_mut()
                    .zip(&src[..dk])
                    .for_each(|(v, o)| *v += theta * o);
            }
        }
        let s = self.problem.source_vector(x);
        let q = s.len();
        let column = |k: usize| &self.basis.as_slice()[k * q..(k + 1) * q];
        let rhs: Vec<f64> = (0..dk)
            .map(|k| column(k).iter().zip(&s).map(|(v, w)| v * w).sum())
            .collect();
        let mut coef = rhs.clone();
        let least_squares = !lu_solve_in_place(&mut a.clone(), dk, &mut coef);
        if least_squares {
            self.least_squares_solves.fetch_add(1, Ordering::Relaxed);
            let m = DMatrix::from_row_slice(dk, dk, &a);
            coef = m
                .svd(true, true)
                .solve(&DVector::from_vec(rhs), 1e-12)
                .map_err(|e| MfceError::SingularSystem(e.to_string()))?
                .as_slice()
                .to_vec();
        }
        let mut field = vec![0.0; q];
        for (k, &y) in coef.iter().enumerate() {
            field
                .iter_mut()
                .zip(column(k))
                .for_each(|(f, v)| *f += y * v);
        }
        let vel = self.velocity.combine(&coefs);
        let mut residual = self.problem.apply_with(&vel, &field);
        residual.iter_mut().zip(&s).for_each(|(a, b)| *a -= b);
        Ok(RbSolution {
            field,
            residual_norm: norm2(&residual),
            residual,
            least_squares,
        })
    }

    /// Certified bound on the error `f* − f^(k)` at 0-based surrogate
    /// `level`: in `‖·‖₂` for the residual and exact-oracle providers, in
    /// `‖·‖∞` for the coercive one. All of them bound the score error.
    pub fn error_bound(&self, x: &[f64], level: usize, provider: BoundProvider) -> Result<f64> {
        let rb = self.rb_solve(x, level)?;
        self.bound_of(x, &rb, provider)
    }

    fn bound_of(&self, x: &[f64], rb: &RbSolution, provider: BoundProvider) -> Result<f64> {
        match provider {
            BoundProvider::Residual => Ok(rb.residual_norm / self.stability_floor),
            BoundProvider::Coercive => {
                let mut z = rb.residual.clone();
                self.dr_lu.solve(&mut z);
                let dual = z
                    .iter()
                    .zip(&rb.residual)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .max(0.0);
                Ok(self.dual_sup_constant * dual.sqrt())
            }
            BoundProvider::ExactOracle => {
                let hf = self.solve_high_fidelity(x)?;
                let diff: Vec<f64> = hf.iter().zip(&rb.field).map(|(a, b)| a - b).collect();
                Ok(norm2(&diff))
            }
        }
    }

    pub fn level_eval(&self, x: &[f64], level: usize) -> Result<LevelEval> {
        if level == self.dims.len() {
            let f = self.solve_high_fidelity(x)?;
            return Ok(LevelEval {
                score: sup_norm_score(&f),
                bound: 0.0,
            });
        }
        let rb = self.rb_solve(x, level)?;
        Ok(LevelEval {
            score: sup_norm_score(&rb.field),
            bound: self.bound_of(x, &rb, self.provider)?,
        })
    }
}

impl ScoreHierarchy for PodHierarchy {
    fn level_count(&self) -> usize {
        self.dims.len() + 1
    }

    fn dimension(&self) -> usize {
        self.problem.dim()
    }

    fn evaluate(&self, x: &[f64], level: usize) -> LevelEval {
        // The operator is nonsingular for every finite parameter, so a
        // failure here is a bug rather than a recoverable condition.
        self.level_eval(x, level)
            .unwrap_or_else(|e| panic!("PDE evaluation failed at {x:?}, level {level}: {e}"))
    }

    fn cost_rank(&self, level: usize) -> usize {
        self.dims.get(level).copied().unwrap_or(self.problem.dofs())
    }
}
