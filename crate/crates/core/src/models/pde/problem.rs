//! Steady advection-diffusion-reaction on `Ω = [0,1] × [0,1/2]`,
//! discretized with cell-centred finite differences and zero-flux walls:
//!
//! `(A f)_P = a₀ f_P + Σ_N [κ₁ (f_P − f_N)/h² + u_PN f_N/(2h)]`
//!
//! over interior neighbours `N`, where `u_PN` is the normal velocity on the
//! face from `P` to `N`. Since `u_NP = −u_PN` the advective part is
//! skew-symmetric, so `vᵀAv ≥ a₀|v|²` and `σ_min(A) ≥ a₀` for every
//! parameter.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::banded::{BandedLu, BandedMatrix};
use crate::error::{MfceError, Result};
use crate::hierarchy::{LevelEval, ScoreHierarchy};

/// Right-hand side of the equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTerm {
    /// `exp(−|z − (x₀, x₁)|²/κ₂²)`.
    Bump,
    /// Constant source, for manufactured-solution tests only.
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdrProblem {
    /// Cells along the unit side; the domain holds `nx × nx/2` cells.
    pub nx: usize,
    pub kappa1: f64,
    pub a0: f64,
    pub kappa2: f64,
    /// Number of stream-function modes, i.e. `p − 3`.
    pub field_modes: usize,
    pub field_amplitude: f64,
    #[serde(skip)]
    pub source: SourceTerm,
    /// Turns advection off, for tests only.
    #[serde(skip, default = "enabled")]
    pub advection: bool,
}

impl Default for AdrProblem {
    fn default() -> Self {
        AdrProblem {
            nx: 32,
            kappa1: 0.03,
            a0: 0.5,
            kappa2: 0.25,
            field_modes: 2,
            field_amplitude: 0.5,
            source: SourceTerm::Bump,
            advection: true,
        }
    }
}

fn enabled() -> bool {
    true
}

impl Default for SourceTerm {
    fn default() -> Self {
        SourceTerm::Bump
    }
}

/// Normal velocities on interior faces: `east[i*ny + j]` between cells
/// `(i, j)` and `(i+1, j)`, `north[i*ny + j]` between `(i, j)` and `(i, j+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceVelocities {
    pub east: Vec<f64>,
    pub north: Vec<f64>,
}

impl FaceVelocities {
    fn zeros(nx: usize, ny: usize) -> Self {
        FaceVelocities {
            east: vec![0.0; nx * ny],
            north: vec![0.0; nx * ny],
        }
    }
    fn axpy(&mut self, a: f64, other: &FaceVelocities) {
        for (s, o) in self.east.iter_mut().zip(&other.east) {
            *s += a * o;
        }
        for (s, o) in self.north.iter_mut().zip(&other.north) {
            *s += a * o;
        }
    }
}

/// The affine velocity components, computed once.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityBasis {
    pub components: Vec<FaceVelocities>,
}

impl VelocityBasis {
    pub fn combine(&self, coefficients: &[f64]) -> FaceVelocities {
        let first = &self.components[0];
        let mut v = FaceVelocities {
            east: vec![0.0; first.east.len()],
            north: vec![0.0; first.north.len()],
        };
        for (comp, &a) in self.components.iter().zip(coefficients) {
            if a != 0.0 {
                v.axpy(a, comp);
            }
        }
        v
    }
}

impl AdrProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| Err(MfceError::config(format!("problem.{k}"), m));
        if self.nx < 6 || self.nx % 2 != 0 {
            return bad("nx", "must be an even number of at least 6 (q ≥ 16)");
        }
        if !(self.kappa1 > 0.0) {
            return bad("kappa1", "must be positive");
        }
        if !(self.a0 > 0.0) {
            return bad("a0", "must be positive");
        }
        if !(self.kappa2 > 0.0) {
            return bad("kappa2", "must be positive");
        }
        if !self.field_amplitude.is_finite() {
            return bad("field_amplitude", "must be finite");
        }
        Ok(())
    }

    pub fn ny(&self) -> usize {
        self.nx / 2
    }

    pub fn h(&self) -> f64 {
        1.0 / self.nx as f64
    }

    /// Number of unknowns `q`.
    pub fn dofs(&self) -> usize {
        self.nx * self.ny()
    }

    /// Parameter dimension `p`.
    pub fn dim(&self) -> usize {
        3 + self.field_modes
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny() + j
    }

    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        let h = self.h();
        let (i, j) = (idx / self.ny(), idx % self.ny());
        ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    pub fn source_vector(&self, x: &[f64]) -> Vec<f64> {
        let (nx, ny, h) = (self.nx, self.ny(), self.h());
        match self.source {
            SourceTerm::Constant(c) => vec![c; nx * ny],
            SourceTerm::Bump => {
                let k2 = self.kappa2 * self.kappa2;
                let gx: Vec<f64> = (0..nx)
                    .map(|i| (-((i as f64 + 0.5) * h - x[0]).powi(2) / k2).exp())
                    .collect();
                let gy: Vec<f64> = (0..ny)
                    .map(|j| (-((j as f64 + 0.5) * h - x[1]).powi(2) / k2).exp())
                    .collect();
                let mut s = Vec::with_capacity(nx * ny);
                for a in &gx {
                    s.extend(gy.iter().map(|b| a * b));
                }
                s
            }
        }
    }

    /// `(a, b)` wavenumbers of stream-function mode `l`, enumerated by
    /// increasing `a + b`.
    fn mode_wavenumbers(l: usize) -> (usize, usize) {
        let mut n = 0;
        for total in 2.. {
            for a in 1..total {
                if n == l {
                    return (a, total - a);
                }
                n += 1;
            }
        }
        unreachable!()
    }

    /// Face velocities of unit constant wind along `e₁` (`c = 0`), `e₂`
    /// (`c = 1`), or of stream-function mode `c − 2`.
    pub fn velocity_component(&self, c: usize) -> FaceVelocities {
        let (nx, ny, h) = (self.nx, self.ny(), self.h());
        let mut v = FaceVelocities::zeros(nx, ny);
        match c {
            0 => v.east.iter_mut().for_each(|u| *u = 1.0),
            1 => v.north.iter_mut().for_each(|u| *u = 1.0),
            _ => {
                let (a, b) = Self::mode_wavenumbers(c - 2);
                let ly = 0.5;
                let ka = a as f64 * PI;
                let kb = b as f64 * PI / ly;
                let norm = (ka * ka + kb * kb).sqrt();
                let psi = |i: usize, j: usize| {
                    (ka * i as f64 * h).sin() * (kb * j as f64 * h).sin() / norm
                };
                // Flux differences of a vertex stream function are exactly
                // divergence-free and vanish on the walls.
                for i in 0..nx {
                    for j in 0..ny {
                        let k = i * ny + j;
                        v.east[k] = (psi(i + 1, j + 1) - psi(i + 1, j)) / h;
                        v.north[k] = -(psi(i + 1, j + 1) - psi(i, j + 1)) / h;
                    }
                }
            }
        }
        v
    }

    /// Number of affine velocity components.
    pub fn velocity_components(&self) -> usize {
        2 + self.field_modes
    }

    /// Coefficients of the components at parameter `x`.
    pub fn velocity_coefficients(&self, x: &[f64]) -> Vec<f64> {
        if !self.advection {
            return vec![0.0; self.velocity_components()];
        }
        let mut c = vec![x[2].cos(), x[2].sin()];
        c.extend(
            x[3..3 + self.field_modes]
                .iter()
                .map(|v| v * self.field_amplitude),
        );
        c
    }

    pub fn velocity_basis(&self) -> VelocityBasis {
        VelocityBasis {
            components: (0..self.velocity_components())
                .map(|c| self.velocity_component(c))
                .collect(),
        }
    }

    pub fn velocities(&self, x: &[f64]) -> FaceVelocities {
        self.velocity_basis()
            .combine(&self.velocity_coefficients(x))
    }

    /// Calls `f(p, n, u_pn)` for every ordered pair of interior neighbours.
    fn for_each_face(&self, vel: Option<&FaceVelocities>, mut f: impl FnMut(usize, usize, f64)) {
        let (nx, ny) = (self.nx, self.ny());
        for i in 0..nx {
            for j in 0..ny {
                let p = i * ny + j;
                if i + 1 < nx {
                    let u = vel.map_or(0.0, |v| v.east[p]);
                    f(p, p + ny, u);
                    f(p + ny, p, -u);
                }
                if j + 1 < ny {
                    let u = vel.map_or(0.0, |v| v.north[p]);
                    f(p, p + 1, u);
                    f(p + 1, p, -u);
                }
            }
        }
    }

    /// `out = D f` for the diffusion-reaction part.
    pub fn apply_diffusion_reaction(&self, f: &[f64], out: &mut [f64]) {
        let d = self.kappa1 / (self.h() * self.h());
        for (o, v) in out.iter_mut().zip(f) {
            *o = self.a0 * v;
        }
        self.for_each_face(None, |p, n, _| out[p] += d * (f[p] - f[n]));
    }

    /// `out = K(vel) f` for the advective part.
    pub fn apply_advection(&self, vel: &FaceVelocities, f: &[f64], out: &mut [f64]) {
        let s = 0.5 / self.h();
        out.iter_mut().for_each(|o| *o = 0.0);
        self.for_each_face(Some(vel), |p, n, u| out[p] += s * u * f[n]);
    }

    /// `A(x) f`.
    pub fn apply(&self, x: &[f64], f: &[f64]) -> Vec<f64> {
        self.apply_with(&self.velocities(x), f)
    }

    pub fn apply_with(&self, vel: &FaceVelocities, f: &[f64]) -> Vec<f64> {
        let n = self.dofs();
        let mut out = vec![0.0; n];
        let mut adv = vec![0.0; n];
        self.apply_diffusion_reaction(f, &mut out);
        self.apply_advection(vel, f, &mut adv);
        out.iter_mut().zip(&adv).for_each(|(o, a)| *o += a);
        out
    }

    pub(crate) fn assemble(&self, vel: &FaceVelocities) -> BandedMatrix {
        let n = self.dofs();
        let d = self.kappa1 / (self.h() * self.h());
        let s = 0.5 / self.h();
        let mut a = BandedMatrix::zeros(n, self.ny());
        for p in 0..n {
            a.add(p, p, self.a0);
        }
        self.for_each_face(Some(vel), |p, nb, u| {
            a.add(p, p, d);
            a.add(p, nb, -d + s * u);
        });
        a
    }

    /// Factor of the symmetric positive definite diffusion-reaction part
    /// `D`; the advective part of `A(x)` is skew, so `fᵀA(x)f = fᵀDf`.
    pub(crate) fn factor_diffusion_reaction(&self) -> Result<BandedLu> {
        self.assemble(&FaceVelocities::zeros(self.nx, self.ny()))
            .factor()
    }

    pub(crate) fn factor_with(&self, basis: &VelocityBasis, x: &[f64]) -> Result<BandedLu> {
        self.assemble(&basis.combine(&self.velocity_coefficients(x)))
            .factor()
    }

    /// Smallest singular value of `A(x)` by inverse iteration on `AᵀA`.
    pub fn smallest_singular_value(&self, x: &[f64]) -> Result<f64> {
        self.smallest_singular_value_with(&self.velocity_basis(), x)
    }

    pub fn smallest_singular_value_with(&self, basis: &VelocityBasis, x: &[f64]) -> Result<f64> {
        let lu = self.factor_with(basis, x)?;
        let n = self.dofs();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut w = v.clone();
            lu.solve_transpose(&mut w);
            lu.solve(&mut w);
            let next = dot(&v, &w);
            normalize(&mut w);
            v = w;
            let done = (next - lambda).abs() <= 1e-12 * next;
            lambda = next;
            if done {
                break;
            }
        }
        Ok(1.0 / lambda.sqrt())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `max_i |f_i|`.
pub fn sup_norm_score(field: &[f64]) -> f64 {
    assert!(!field.is_empty(), "empty field");
    field.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// High-fidelity concentration field at parameter `x`.
pub fn solve_high_fidelity(problem: &AdrProblem, x: &[f64]) -> Result<Vec<f64>> {
    solve_high_fidelity_with(problem, &problem.velocity_basis(), x)
}

pub(crate) fn check_parameter(problem: &AdrProblem, x: &[f64]) -> Result<()> {
    if x.len() != problem.dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(MfceError::InvalidParameter(format!(
            "expected {} finite coordinates, got {:?}",
            problem.dim(),
            x
        )));
    }
    Ok(())
}

pub fn solve_high_fidelity_with(
    problem: &AdrProblem,
    basis: &VelocityBasis,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_parameter(problem, x)?;
    let vel = basis.combine(&problem.velocity_coefficients(x));
    let mut f = problem.source_vector(x);
    problem.assemble(&vel).factor()?.solve(&mut f);
    Ok(f)
}

/// The high-fidelity score alone, as a one-level hierarchy.
pub struct HighFidelityModel {
    problem: AdrProblem,
    velocity: VelocityBasis,
}

impl HighFidelityModel {
    pub fn new(problem: AdrProblem) -> Result<Self> {
        problem.validate()?;
        let velocity = problem.velocity_basis();
        Ok(HighFidelityModel { problem, velocity })
    }
}

impl ScoreHierarchy for HighFidelityModel {
    fn level_count(&self) -> usize {
        1
    }

    fn dimension(&self) -> usize {
        self.problem.dim()
    }

    fn evaluate(&self, x: &[f64], level: usize) -> LevelEval {
        assert_eq!(level, 0, "single-level model");
        let f = solve_high_fidelity_with(&self.problem, &self.velocity, x)
            .unwrap_or_else(|e| panic!("PDE evaluation failed at {x:?}: {e}"));
        LevelEval {
            score: sup_norm_score(&f),
            bound: 0.0,
        }
    }

    fn cost_rank(&self, _level: usize) -> usize {
        self.problem.dofs()
    }
}
