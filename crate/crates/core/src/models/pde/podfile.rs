//! Flat binary persistence of a POD basis:
//! `"MFCEPOD1"`, `q`, `d_K`, `len(𝒦)`, `𝒦…` as little-endian `u64`, then
//! the `q × d_K` basis column-major as `f64`, then the stability floor.

use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::Path;

use super::pod::PodHierarchy;
use super::problem::AdrProblem;
use crate::error::{MfceError, Result};

const MAGIC: &[u8; 8] = b"MFCEPOD1";

pub fn write_pod_file(path: &Path, hierarchy: &PodHierarchy) -> Result<()> {
    let basis = hierarchy.basis();
    let mut buf = Vec::with_capacity(8 * (5 + hierarchy.dims().len() + basis.len()));
    buf.extend_from_slice(MAGIC);
    for v in [basis.nrows(), basis.ncols(), hierarchy.dims().len()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &d in hierarchy.dims() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in basis.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&hierarchy.stability_floor().to_le_bytes());
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let chunk = self
            .bytes
            .get(self.at..self.at + 8)
            .ok_or_else(|| MfceError::PodFormat("truncated file".into()))?;
        self.at += 8;
        Ok(chunk.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take8()?);
        usize::try_from(v).map_err(|_| MfceError::PodFormat(format!("size {v} out of range")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }
}

/// Reads a basis written by [`write_pod_file`] and rebuilds the reduced
/// operators for `problem`.
pub fn read_pod_file(path: &Path, problem: &AdrProblem) -> Result<PodHierarchy> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        at: 0,
    };
    if &c.take8()? != MAGIC {
        return Err(MfceError::PodFormat("bad magic".into()));
    }
    let q = c.u64()?;
    let dk = c.u64()?;
    let n = c.u64()?;
    if n > 1 << 20 || q.checked_mul(dk).is_none_or(|s| s > bytes.len() / 8) {
        return Err(MfceError::PodFormat("implausible header".into()));
    }
    let dims = (0..n).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    if dims.last() != Some(&dk) {
        return Err(MfceError::PodFormat(
            "largest level does not match the basis width".into(),
        ));
    }
    if q != problem.dofs() {
        return Err(MfceError::PodFormat(format!(
            "basis has {q} unknowns, the problem has {}",
            problem.dofs()
        )));
    }
    let data = (0..q * dk).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let floor = c.f64()?;
    if c.at != bytes.len() {
        return Err(MfceError::PodFormat("trailing bytes".into()));
    }
    PodHierarchy::from_basis(
        problem,
        DMatrix::from_vec(q, dk, data),
        dims,
        floor,
        Vec::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::pde::snapshot_parameters;

    fn fixture() -> (AdrProblem, PodHierarchy) {
        let problem = AdrProblem {
            nx: 8,
            ..AdrProblem::default()
        };
        let params = snapshot_parameters(&[0.5, 0.25, 0.0, 0.0, 0.0], 1.0, 12, 2);
        let h = PodHierarchy::build(&problem, &params, vec![2, 5]).unwrap();
        (problem, h)
    }

    #[test]
    fn round_trip_preserves_basis_and_floor() {
        let (problem, h) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.pod");
        write_pod_file(&path, &h).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 8 * (1 + 3 + 2 + problem.dofs() * 5 + 1));
        let back = read_pod_file(&path, &problem).unwrap();
        assert_eq!(back.basis(), h.basis());
        assert_eq!(back.dims(), h.dims());
        assert_eq!(back.stability_floor(), h.stability_floor());
    }

    #[test]
    fn rejects_corrupt_or_mismatched_files() {
        let (problem, h) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.pod");
        write_pod_file(&path, &h).unwrap();
        let good = std::fs::read(&path).unwrap();

        let other = AdrProblem {
            nx: 10,
            ..problem.clone()
        };
        assert!(matches!(
            read_pod_file(&path, &other),
            Err(MfceError::PodFormat(_))
        ));

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(matches!(
            read_pod_file(&path, &problem),
            Err(MfceError::PodFormat(_))
        ));

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            read_pod_file(&path, &problem),
            Err(MfceError::PodFormat(_))
        ));
    }
}
