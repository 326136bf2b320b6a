//! Dense small-scale LP and convex QP solvers.
//!
//! Sign convention for multipliers, shared by LP and QP: the Lagrangian is
//!
//! ```text
//! f(x) + y_eq'(A_eq x - b_eq) + y_in'(A_in x - b_in) + z_u'(x - u) + z_l'(l - x)
//! ```
//!
//! with `y_in, z_l, z_u >= 0`.

mod apg;
mod lp;
mod lsq;
mod qp;

pub use apg::{apg_simplex_cap, ApgOptions, ApgResult};
pub use lp::{lp_solve, lp_solve_with, Farkas, LpOptions, LpProblem, LpSolution};
pub use lsq::{capped_lsq, LsqOptions, LsqResult, LsqWork};
pub use qp::{qp_solve, qp_solve_with, QpOptions, QpProblem, QpSolution};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_PIVOTS: usize = 1_000_000;
pub const PSD_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::IterLimit => "iter_limit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStatus {
    pub status: Status,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl SolveStatus {
    pub fn new(status: Status, iterations: usize, kkt_residual: f64) -> Self {
        SolveStatus { status, iterations, kkt_residual }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Error)]
pub enum OptError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("quadratic term is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("quadratic term is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("invalid bound for variable {index}: lower {lower}, upper {upper}")]
    InvalidBound { index: usize, lower: f64, upper: f64 },
    #[error("numeric breakdown: {0}")]
    NumericBreakdown(String),
}

/// Multipliers of the constraint blocks, in the module's sign convention.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Shared constraint blocks of LP and QP problems.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Constraints {
    /// No rows; every variable nonnegative.
    pub fn nonnegative(n: usize) -> Self {
        Constraints {
            a_eq: DMatrix::zeros(0, n),
            b_eq: vec![],
            a_in: DMatrix::zeros(0, n),
            b_in: vec![],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let n = self.n();
        let check = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(OptError::DimensionMismatch { what, expected, got })
            }
        };
        check("upper bounds", n, self.upper.len())?;
        check("equality columns", n, self.a_eq.ncols())?;
        check("equality rhs", self.a_eq.nrows(), self.b_eq.len())?;
        check("inequality columns", n, self.a_in.ncols())?;
        check("inequality rhs", self.a_in.nrows(), self.b_in.len())?;
        if self.a_eq.iter().chain(self.a_in.iter()).chain(&self.b_eq).chain(&self.b_in).any(|v| !v.is_finite()) {
            return Err(OptError::NonFinite("constraints"));
        }
        for (index, (&lower, &upper)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lower.is_nan() || upper.is_nan() || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
                return Err(OptError::InvalidBound { index, lower, upper });
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, b) in self.b_eq.iter().enumerate() {
            let ax: f64 = self.a_eq.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max((ax - b).abs());
        }
        for (i, b) in self.b_in.iter().enumerate() {
            let ax: f64 = self.a_in.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(ax - b);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// Stationarity, dual sign and complementarity residuals given the
    /// objective gradient at `x`.
    pub fn kkt_residual(&self, x: &[f64], grad: &[f64], d: &Duals) -> f64 {
        let mut r: Vec<f64> = grad.to_vec();
        for (i, y) in d.eq.iter().enumerate() {
            for (j, rj) in r.iter_mut().enumerate() {
                *rj += self.a_eq[(i, j)] * y;
            }
        }
        for (i, y) in d.ineq.iter().enumerate() {
            for (j, rj) in r.iter_mut().enumerate() {
                *rj += self.a_in[(i, j)] * y;
            }
        }
        for (j, rj) in r.iter_mut().enumerate() {
            *rj += d.upper[j] - d.lower[j];
        }
        let scale = 1.0 + grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        worst = worst.max(self.primal_residual(x));
        for (i, &y) in d.ineq.iter().enumerate() {
            let slack = self.b_in[i] - self.a_in.row(i).iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            worst = worst.max(-y).max((y * slack).abs());
        }
        for j in 0..x.len() {
            worst = worst.max(-d.lower[j]).max(-d.upper[j]);
            if self.lower[j].is_finite() {
                worst = worst.max((d.lower[j] * (x[j] - self.lower[j])).abs());
            }
            if self.upper[j].is_finite() {
                worst = worst.max((d.upper[j] * (self.upper[j] - x[j])).abs());
            }
        }
        worst
    }

    /// Constraint part of the Lagrangian at `x`.
    pub fn lagrangian_terms(&self, x: &[f64], d: &Duals) -> f64 {
        let mut total = 0.0;
        for (i, y) in d.eq.iter().enumerate() {
            let ax: f64 = self.a_eq.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
            total += y * (ax - self.b_eq[i]);
        }
        for (i, y) in d.ineq.iter().enumerate() {
            let ax: f64 = self.a_in.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
            total += y * (ax - self.b_in[i]);
        }
        for j in 0..x.len() {
            if self.upper[j].is_finite() {
                total += d.upper[j] * (x[j] - self.upper[j]);
            }
            if self.lower[j].is_finite() {
                total += d.lower[j] * (self.lower[j] - x[j]);
            }
        }
        total
    }
}

/// Euclidean projection of `v` onto `{c >= 0, sum(c) <= psi}`.
pub fn project_simplex_cap(v: &[f64], psi: f64) -> Vec<f64> {
    assert!(psi >= 0.0, "psi must be nonnegative");
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= psi {
        return clipped;
    }
    // projection onto the simplex {c >= 0, sum c = psi}
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - psi) / (k + 1) as f64;
        if k == 0 || s - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex_cap(&[2.0, 0.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(project_simplex_cap(&[0.2, 0.3], 1.0), vec![0.2, 0.3]);
        let p = project_simplex_cap(&[1.0, 1.0], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert_eq!(project_simplex_cap(&[-1.0, 3.0], 0.0), vec![0.0, 0.0]);
    }

    fn feasible_point(raw: &[f64], psi: f64) -> Vec<f64> {
        let z: Vec<f64> = raw.iter().map(|v| v.abs()).collect();
        let s: f64 = z.iter().sum();
        if s > psi && s > 0.0 {
            z.iter().map(|v| v * psi / s).collect()
        } else {
            z
        }
    }

    proptest! {
        #[test]
        fn projection_variational_inequality(
            v in prop::collection::vec(-3.0f64..3.0, 1..8),
            psi in 0.0f64..3.0,
            zs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 20),
        ) {
            let c = project_simplex_cap(&v, psi);
            prop_assert!(c.iter().all(|&x| x >= 0.0));
            prop_assert!(c.iter().sum::<f64>() <= psi + 1e-12);
            for raw in &zs {
                let z = feasible_point(&raw[..v.len()], psi);
                let ip: f64 = (0..v.len()).map(|i| (v[i] - c[i]) * (z[i] - c[i])).sum();
                prop_assert!(ip <= 1e-9);
            }
        }

        #[test]
        fn projection_fixes_feasible_points(raw in prop::collection::vec(-1.0f64..1.0, 1..8), psi in 0.0f64..3.0) {
            let z = feasible_point(&raw, psi);
            let c = project_simplex_cap(&z, psi);
            for (a, b) in c.iter().zip(&z) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
