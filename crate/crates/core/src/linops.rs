//! Linear operators R^d -> R^m with adjoints.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::{Alphabet, GaussianWaves};
use crate::rng::{seeded, standard_normals};

pub const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Error)]
pub enum LinOpError {
    #[error("input has length {got}, operator expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point sampler acts on parametric atoms, not on finite vectors")]
    Undefined,
    #[error("power iteration did not converge: estimate {estimate}, residual {residual:e}")]
    NoConvergence { estimate: f64, residual: f64, iterate: Vec<f64> },
    #[error("basis is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid operator: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinOp {
    Identity { d: usize },
    Dense(DMatrix<f64>),
    /// `G / sqrt(m)` with i.i.d. standard normal `G`, drawn row-major.
    GaussianRandom { seed: u64, scale: f64, matrix: DMatrix<f64> },
    PointSampler { locations: Vec<f64> },
}

impl LinOp {
    pub fn identity(d: usize) -> Self {
        LinOp::Identity { d }
    }

    pub fn dense(matrix: DMatrix<f64>) -> Self {
        LinOp::Dense(matrix)
    }

    pub fn gaussian(m: usize, d: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let scale = 1.0 / (m as f64).sqrt();
        let g = standard_normals(&mut rng, m * d);
        let matrix = DMatrix::from_row_iterator(m, d, g.into_iter().map(|v| v * scale));
        LinOp::GaussianRandom { seed, scale, matrix }
    }

    pub fn point_sampler(locations: Vec<f64>) -> Self {
        LinOp::PointSampler { locations }
    }

    /// `m` locations drawn i.i.d. uniform on `[lo, hi]`.
    pub fn uniform_point_sampler(m: usize, lo: f64, hi: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        LinOp::PointSampler { locations: (0..m).map(|_| rng.random_range(lo..=hi)).collect() }
    }

    pub fn m(&self) -> usize {
        match self {
            LinOp::Identity { d } => *d,
            LinOp::Dense(a) | LinOp::GaussianRandom { matrix: a, .. } => a.nrows(),
            LinOp::PointSampler { locations } => locations.len(),
        }
    }

    /// Input dimension; `None` for the point sampler.
    pub fn d(&self) -> Option<usize> {
        match self {
            LinOp::Identity { d } => Some(*d),
            LinOp::Dense(a) | LinOp::GaussianRandom { matrix: a, .. } => Some(a.ncols()),
            LinOp::PointSampler { .. } => None,
        }
    }

    /// Dense matrix representation.
    pub fn to_dense(&self) -> Result<DMatrix<f64>, LinOpError> {
        match self {
            LinOp::Identity { d } => Ok(DMatrix::identity(*d, *d)),
            LinOp::Dense(a) | LinOp::GaussianRandom { matrix: a, .. } => Ok(a.clone()),
            LinOp::PointSampler { .. } => Err(LinOpError::Undefined),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LinOpError> {
        let d = self.d().ok_or(LinOpError::Undefined)?;
        if x.len() != d {
            return Err(LinOpError::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(match self {
            LinOp::Identity { .. } => x.to_vec(),
            LinOp::Dense(a) | LinOp::GaussianRandom { matrix: a, .. } => {
                (a * DVector::from_column_slice(x)).iter().copied().collect()
            }
            LinOp::PointSampler { .. } => unreachable!(),
        })
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>, LinOpError> {
        self.d().ok_or(LinOpError::Undefined)?;
        if y.len() != self.m() {
            return Err(LinOpError::DimensionMismatch { expected: self.m(), got: y.len() });
        }
        Ok(match self {
            LinOp::Identity { .. } => y.to_vec(),
            LinOp::Dense(a) | LinOp::GaussianRandom { matrix: a, .. } => {
                a.tr_mul(&DVector::from_column_slice(y)).iter().copied().collect()
            }
            LinOp::PointSampler { .. } => unreachable!(),
        })
    }

    /// Largest singular value by power iteration on `L'L`.
    pub fn operator_norm(&self) -> Result<f64, LinOpError> {
        if let LinOp::Identity { d } = self {
            return Ok(if *d == 0 { 0.0 } else { 1.0 });
        }
        let a = self.to_dense()?;
        power_norm(&a)
    }
}

fn power_norm(a: &DMatrix<f64>) -> Result<f64, LinOpError> {
    let d = a.ncols();
    if d == 0 || a.nrows() == 0 {
        return Ok(0.0);
    }
    // deterministic start with distinct entries
    let mut v = DVector::from_fn(d, |i, _| 1.0 + (i as f64 + 1.0).sqrt() / d as f64);
    v.normalize_mut();
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut stable = 0;
    for _ in 0..POWER_MAX_ITER {
        let w = a.tr_mul(&(a * &v));
        let next = v.dot(&w);
        residual = (&w - &v * next).norm();
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        let change = (next - lambda).abs();
        lambda = next;
        v = w / wn;
        if residual <= 1e-12 * lambda {
            return Ok(lambda.sqrt());
        }
        if change <= 1e-15 * lambda {
            stable += 1;
            if stable >= 5 {
                return Ok(lambda.sqrt());
            }
        } else {
            stable = 0;
        }
    }
    Err(LinOpError::NoConvergence { estimate: lambda.sqrt(), residual, iterate: v.iter().copied().collect() })
}

/// `L(A)`: the m x |A| matrix whose column i is `L(A_i)`.
pub fn sensing_matrix(op: &LinOp, a: &Alphabet) -> Result<DMatrix<f64>, LinOpError> {
    let d = op.d().ok_or(LinOpError::Undefined)?;
    if d != a.dim() {
        return Err(LinOpError::DimensionMismatch { expected: d, got: a.dim() });
    }
    let am = a.matrix();
    Ok(match op {
        LinOp::Identity { .. } => am,
        LinOp::Dense(l) | LinOp::GaussianRandom { matrix: l, .. } => l * am,
        LinOp::PointSampler { .. } => unreachable!(),
    })
}

/// Entry (j, i) is wave i evaluated at location j.
pub fn materialize_sensing(op: &LinOp, waves: &GaussianWaves) -> Result<DMatrix<f64>, LinOpError> {
    match op {
        LinOp::PointSampler { locations } => {
            Ok(DMatrix::from_fn(locations.len(), waves.len(), |j, i| waves.eval(i, locations[j])))
        }
        _ => Err(LinOpError::Invalid("materialize_sensing needs a point sampler".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipCheck {
    pub holds: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Extreme singular values of `L` restricted to the span of an orthonormal
/// basis, compared with `1 -/+ delta`.
pub fn check_rip(op: &LinOp, basis: &[Vec<f64>], delta: f64) -> Result<RipCheck, LinOpError> {
    let d = op.d().ok_or(LinOpError::Undefined)?;
    if !(0.0..1.0).contains(&delta) {
        return Err(LinOpError::Invalid(format!("delta must lie in [0, 1), got {delta}")));
    }
    if basis.is_empty() {
        return Err(LinOpError::Invalid("empty basis".into()));
    }
    for b in basis {
        if b.len() != d {
            return Err(LinOpError::DimensionMismatch { expected: d, got: b.len() });
        }
    }
    let u = DMatrix::from_fn(d, basis.len(), |r, c| basis[c][r]);
    let dev = (u.tr_mul(&u) - DMatrix::identity(basis.len(), basis.len())).amax();
    if dev > 1e-9 {
        return Err(LinOpError::NotOrthonormal(dev));
    }
    let lu = match op {
        LinOp::Identity { .. } => u,
        _ => op.to_dense()? * u,
    };
    let sv = lu.svd(false, false).singular_values;
    let (sigma_min, sigma_max) = (sv.min(), sv.max());
    Ok(RipCheck { holds: sigma_min >= 1.0 - delta && sigma_max <= 1.0 + delta, sigma_min, sigma_max })
}

/// Row-major JSON array of rows, 17 significant digits.
pub fn write_matrix_json(m: &DMatrix<f64>) -> String {
    let mut out = String::from("[");
    for r in 0..m.nrows() {
        if r > 0 {
            out.push_str(",\n ");
        }
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        crate::alphabet::write_vector(&mut out, &row);
    }
    out.push(']');
    out
}

/// Builds a matrix from rows; all rows must share a length.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, LinOpError> {
    let cols = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(LinOpError::DimensionMismatch { expected: cols, got: bad.len() });
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::build_gaussian_waves;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dense_and_identity() {
        let op = LinOp::dense(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
        assert_eq!(op.apply(&[3.0, 4.0]).unwrap(), vec![11.0]);
        assert_eq!(op.adjoint(&[1.0]).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(op.apply(&[1.0]), Err(LinOpError::DimensionMismatch { .. })));
        assert_eq!(LinOp::identity(3).apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn gaussian_columns_near_unit() {
        let op = LinOp::gaussian(1000, 4, 5);
        let a = op.to_dense().unwrap();
        for c in 0..4 {
            let n = a.column(c).norm();
            assert!((n - 1.0).abs() < 0.1, "column {c} has norm {n}");
        }
        assert_eq!(op, LinOp::gaussian(1000, 4, 5));
    }

    #[test]
    fn operator_norms() {
        assert_eq!(LinOp::identity(4).operator_norm().unwrap(), 1.0);
        let diag = LinOp::dense(DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]));
        assert_abs_diff_eq!(diag.operator_norm().unwrap(), 3.0, epsilon = 1e-8);
        let shear = LinOp::dense(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
        // explicit 2x2 SVD: sigma^2 solves s^2 - 3s + 1 = 0
        let golden = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert_abs_diff_eq!(shear.operator_norm().unwrap(), golden, epsilon = 1e-8 * golden);
        assert_abs_diff_eq!(golden, 1.6180, epsilon = 1e-4);
    }

    #[test]
    fn point_sampler_sensing() {
        let waves = build_gaussian_waves(2, 0.35, 0.0, 1.0).unwrap();
        let op = LinOp::point_sampler(vec![0.0, 0.5, 1.0]);
        let s = materialize_sensing(&op, &waves).unwrap();
        assert_abs_diff_eq!(s[(1, 0)], (-0.25f64 / 0.1225).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(s[(1, 0)], 0.12992, epsilon = 1e-5);
        let one = materialize_sensing(&LinOp::point_sampler(vec![waves.centers()[0]]), &waves).unwrap();
        assert_eq!(one[(0, 0)], 1.0);
        assert!(matches!(op.apply(&[1.0]), Err(LinOpError::Undefined)));
        let a = LinOp::uniform_point_sampler(40, 0.0, 1.0, 7);
        assert_eq!(a, LinOp::uniform_point_sampler(40, 0.0, 1.0, 7));
    }

    #[test]
    fn rip_checks() {
        let r = check_rip(&LinOp::identity(3), &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 0.0).unwrap();
        assert!(r.holds && r.sigma_min == 1.0 && r.sigma_max == 1.0);
        let op = LinOp::dense(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.5]));
        let r = check_rip(&op, &[vec![1.0, 0.0]], 0.4).unwrap();
        assert!(!r.holds);
        assert_abs_diff_eq!(r.sigma_min, 0.5, epsilon = 1e-12);
        assert!(matches!(check_rip(&op, &[vec![2.0, 0.0]], 0.4), Err(LinOpError::NotOrthonormal(_))));
    }
}
