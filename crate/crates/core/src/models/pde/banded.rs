//! Banded LU without pivoting. The discrete operators factored here have a
//! positive definite symmetric part, so every leading minor is nonsingular
//! and no pivoting is needed.

use crate::error::{MfceError, Result};

/// Square matrix with `bw` sub- and super-diagonals, stored row-major as
/// `n × (2·bw + 1)`.
#[derive(Clone, Debug)]
pub(crate) struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, bw) = (self.n, self.bw);
        let width = 2 * bw + 1;
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(MfceError::SingularSystem(format!("zero pivot at row {k}")));
            }
            let end = (k + bw + 1).min(n);
            for i in k + 1..end {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                self.data[sik] = l;
                if l == 0.0 {
                    continue;
                }
                // Row k entries k+1..end sit contiguously, as do row i's.
                let rk = k * width + bw + 1;
                let ri = sik + 1;
                for t in 0..end - k - 1 {
                    self.data[ri + t] -= l * self.data[rk + t];
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

/// `A = LU` with unit lower `L`, both packed in the band storage.
#[derive(Clone, Debug)]
pub(crate) struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.m.n, self.m.bw);
        assert_eq!(b.len(), n);
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let mut s = b[i];
            for j in start..i {
                s -= self.m.get(i, j) * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + bw + 1).min(n);
            let mut s = b[i];
            for j in i + 1..end {
                s -= self.m.get(i, j) * b[j];
            }
            b[i] = s / self.m.get(i, i);
        }
    }

    /// Solves `Aᵀx = b` via `Uᵀz = b`, then `Lᵀx = z`.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let (n, bw) = (self.m.n, self.m.bw);
        assert_eq!(b.len(), n);
        for i in 0..n {
            b[i] /= self.m.get(i, i);
            let bi = b[i];
            for j in i + 1..(i + bw + 1).min(n) {
                b[j] -= self.m.get(i, j) * bi;
            }
        }
        for i in (0..n).rev() {
            let bi = b[i];
            for j in i.saturating_sub(bw)..i {
                b[j] -= self.m.get(i, j) * bi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn random_band(n: usize, bw: usize) -> (BandedMatrix, DMatrix<f64>) {
        let mut b = BandedMatrix::zeros(n, bw);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                let v = if i == j {
                    4.0 * bw as f64
                } else {
                    ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5
                };
                b.add(i, j, v);
                d[(i, j)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn matches_dense_solves() {
        let (b, d) = random_band(40, 5);
        let lu = b.factor().unwrap();
        let rhs: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        lu.solve(&mut x);
        let r = &d * DVector::from_vec(x) - DVector::from_vec(rhs.clone());
        assert!(r.norm() < 1e-12);
        let mut y = rhs.clone();
        lu.solve_transpose(&mut y);
        let r = d.transpose() * DVector::from_vec(y) - DVector::from_vec(rhs);
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut b = BandedMatrix::zeros(3, 1);
        b.add(0, 0, 1.0);
        b.add(2, 2, 1.0);
        assert!(matches!(b.factor(), Err(MfceError::SingularSystem(_))));
    }
}
