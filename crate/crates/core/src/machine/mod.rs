//! Learning machines
//!
//! ```text
//! min ||L(A) c - y||^2   s.t.  c >= 0,  sum(c) <= psi,  |supp(c)| <= p
//! ```
//!
//! solved by the convex machine (`p = |A|`), exhaustive subset enumeration,
//! the dual alternating heuristic, or big-M branch-and-bound.

mod bnb;
mod convex;
mod dualalt;
mod oracle;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::Alphabet;
use crate::gauge::Decomposition;
use crate::linops::{sensing_matrix, LinOp, LinOpError};
use crate::optcore::{capped_lsq, LsqOptions, LsqResult, LsqWork, OptError, SolveStatus, Status};

pub use bnb::{solve_bnb, solve_bnb_with, BnbOptions};
pub use convex::{solve_basis_pursuit, solve_convex, solve_convex_with, ConvexOptions};
pub use dualalt::{
    default_gamma, dual_objective, recover_dual, select_top_p, solve_dual_alternating, DualAltOutput, DualState,
    FixedPointCheck, StopReason, DUALITY_TOL,
};
pub use oracle::solve_oracle;

/// Coefficients below this are dropped when reporting a support.
pub const PRUNE_TOL: f64 = 1e-10;
/// Allowed excess of `sum(c)` over `psi`.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Objectives closer than this (relative to `1 + |f|`) count as tied.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("p must lie in 1..={n_atoms}, got {p}")]
    SparsityOutOfRange { p: usize, n_atoms: usize },
    #[error("enumeration needs {required} subset problems, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },
    #[error("gamma must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("no nonnegative combination reaches residual {eta}; best is {best}")]
    Infeasible { eta: f64, best: f64 },
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    LinOp(#[from] LinOpError),
    #[error("problem file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "dual_alt")]
    DualAlt,
    #[serde(rename = "bnb")]
    BnB,
    #[serde(rename = "convex")]
    Convex,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Oracle => "oracle",
            SolverKind::DualAlt => "dual_alt",
            SolverKind::BnB => "bnb",
            SolverKind::Convex => "convex",
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    sensing: Vec<Vec<f64>>,
    y: Vec<f64>,
    psi: f64,
    p: usize,
}

/// Sensing matrix `L(A)` (column `i` is `L(A_i)`), observation, budget and
/// sparsity cap.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineProblem {
    sensing: DMatrix<f64>,
    y: DVector<f64>,
    psi: f64,
    p: usize,
}

impl MachineProblem {
    pub fn new(sensing: DMatrix<f64>, y: Vec<f64>, psi: f64, p: usize) -> Result<Self, MachineError> {
        if sensing.nrows() != y.len() {
            return Err(MachineError::Invalid(format!(
                "sensing has {} rows but y has length {}",
                sensing.nrows(),
                y.len()
            )));
        }
        if sensing.ncols() == 0 {
            return Err(MachineError::Invalid("no atoms".into()));
        }
        if !(psi.is_finite() && psi >= 0.0) {
            return Err(MachineError::Invalid(format!("psi must be finite and nonnegative, got {psi}")));
        }
        if p == 0 || p > sensing.ncols() {
            return Err(MachineError::SparsityOutOfRange { p, n_atoms: sensing.ncols() });
        }
        if sensing.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(MachineError::Invalid("non-finite entry".into()));
        }
        Ok(MachineProblem { sensing, y: DVector::from_vec(y), psi, p })
    }

    /// Builds `L(A)` from an operator and an alphabet.
    pub fn from_alphabet(op: &LinOp, a: &Alphabet, y: Vec<f64>, psi: f64, p: usize) -> Result<Self, MachineError> {
        MachineProblem::new(sensing_matrix(op, a)?, y, psi, p)
    }

    pub fn sensing(&self) -> &DMatrix<f64> {
        &self.sensing
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.sensing.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.sensing.ncols()
    }

    pub fn is_convex(&self) -> bool {
        self.p == self.n_atoms()
    }

    pub fn with_psi(&self, psi: f64) -> Result<Self, MachineError> {
        MachineProblem::new(self.sensing.clone(), self.y.as_slice().to_vec(), psi, self.p)
    }

    pub fn with_p(&self, p: usize) -> Result<Self, MachineError> {
        MachineProblem::new(self.sensing.clone(), self.y.as_slice().to_vec(), self.psi, p)
    }

    /// `||L(A) c - y||^2`.
    pub fn objective(&self, c: &[f64]) -> f64 {
        (&self.sensing * DVector::from_column_slice(c) - &self.y).norm_squared()
    }

    pub fn parse_json(text: &str) -> Result<Self, MachineError> {
        let f: ProblemFile = serde_json::from_str(text)?;
        let m = f.sensing.len();
        let n = f.sensing.first().map_or(0, Vec::len);
        if f.sensing.iter().any(|r| r.len() != n) {
            return Err(MachineError::Invalid("sensing rows have different lengths".into()));
        }
        let sensing = DMatrix::from_fn(m, n, |r, c| f.sensing[r][c]);
        MachineProblem::new(sensing, f.y, f.psi, f.p)
    }

    pub fn load(path: &Path) -> Result<Self, MachineError> {
        MachineProblem::parse_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let f = ProblemFile {
            sensing: self.sensing.row_iter().map(|r| r.iter().copied().collect()).collect(),
            y: self.y.as_slice().to_vec(),
            psi: self.psi,
            p: self.p,
        };
        serde_json::to_string(&f).expect("plain data serializes")
    }
}

/// One line of a solver's iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub support: Vec<usize>,
    /// Primal value at this step.
    pub primal: f64,
    /// Bound paired with it (dual value, node bound, ...).
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub decomposition: Decomposition,
    /// `||L(A) c - y||^2` at the reported (pruned) coefficients.
    pub objective: f64,
    pub status: SolveStatus,
    /// A lower bound on the optimal value of the solved problem.
    pub lower_bound: f64,
    pub solver: SolverKind,
    pub trace: Vec<TraceEntry>,
}

impl SolveResult {
    pub fn support(&self) -> &[usize] {
        self.decomposition.support()
    }

    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        self.decomposition.dense(n)
    }

    pub fn gap(&self) -> f64 {
        (self.objective - self.lower_bound).max(0.0)
    }

    /// Checks `c >= 0`, `sum(c) <= psi + tol` and `|supp| <= p`.
    pub fn check_feasible(&self, prob: &MachineProblem) -> Result<(), String> {
        let d = &self.decomposition;
        if d.support().iter().any(|&i| i >= prob.n_atoms()) {
            return Err("support index out of range".into());
        }
        if d.coeffs().iter().any(|&c| c < -1e-12) {
            return Err("negative coefficient".into());
        }
        if d.mass() > prob.psi() + FEASIBILITY_TOL {
            return Err(format!("mass {} exceeds psi {}", d.mass(), prob.psi()));
        }
        if d.len() > prob.p() {
            return Err(format!("support size {} exceeds p = {}", d.len(), prob.p()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// `x = sum c_i A_i`.
pub fn model_from(result: &SolveResult, a: &Alphabet) -> Result<Vec<f64>, MachineError> {
    if let Some(&i) = result.support().iter().find(|&&i| i >= a.len()) {
        return Err(MachineError::Invalid(format!("support index {i} outside alphabet of {} atoms", a.len())));
    }
    Ok(result.decomposition.reconstruct(a))
}

/// Default solver ladder for the gauge_p machine: the convex machine when
/// `p = |A|`, otherwise dual alternating followed by branch-and-bound warm
/// started from every candidate support.
pub fn solve_machine(
    prob: &MachineProblem,
    gamma: Option<f64>,
    time_limit: Option<std::time::Duration>,
) -> Result<SolveResult, MachineError> {
    if prob.is_convex() {
        return solve_convex(prob);
    }
    let gamma = gamma.unwrap_or_else(|| default_gamma(prob));
    let alt = solve_dual_alternating(prob, gamma, 200)?;
    solve_bnb(prob, &alt.candidates, time_limit)
}

/// `a` strictly better than `b`: smaller objective, then lexicographically
/// smaller support among ties.
pub(crate) fn better(a_obj: f64, a_supp: &[usize], b_obj: f64, b_supp: &[usize]) -> bool {
    let tie = TIE_TOL * (1.0 + a_obj.abs().max(b_obj.abs()));
    if a_obj < b_obj - tie {
        return true;
    }
    if a_obj > b_obj + tie {
        return false;
    }
    a_supp < b_supp
}

/// A pruned candidate solution.
#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub c: Vec<f64>,
    pub objective: f64,
    pub support: Vec<usize>,
    /// Lower bound on the problem restricted to the solved columns.
    pub bound: f64,
    pub status: SolveStatus,
}

impl Candidate {
    pub fn from_lsq(prob: &MachineProblem, r: &LsqResult, allowed: Option<&[bool]>) -> Candidate {
        let mut c = r.c.clone();
        for v in c.iter_mut() {
            if *v < PRUNE_TOL {
                *v = 0.0;
            }
        }
        let support: Vec<usize> = (0..c.len()).filter(|&i| c[i] > 0.0).collect();
        let objective = prob.objective(&c);
        let bound = frank_wolfe_bound(prob, &r.c, allowed);
        Candidate { c, objective, support, bound, status: r.status }
    }

    pub fn zero(prob: &MachineProblem) -> Candidate {
        let n = prob.n_atoms();
        let objective = prob.y.norm_squared();
        Candidate {
            c: vec![0.0; n],
            objective,
            support: Vec::new(),
            bound: f64::NEG_INFINITY,
            status: SolveStatus::new(Status::Optimal, 0, 0.0),
        }
    }

    pub fn better_than(&self, other: &Candidate) -> bool {
        better(self.objective, &self.support, other.objective, &other.support)
    }

    pub fn into_result(self, solver: SolverKind, status: SolveStatus, lower_bound: f64, trace: Vec<TraceEntry>) -> SolveResult {
        let decomposition = Decomposition::from_dense(&self.c, 0.0);
        SolveResult {
            decomposition,
            objective: self.objective,
            status,
            lower_bound: lower_bound.min(self.objective),
            solver,
            trace,
        }
    }
}

/// Lower bound `f(c) - <grad, c - s>` from the linear minimizer `s` of the
/// gradient over the allowed capped simplex.
pub(crate) fn frank_wolfe_bound(prob: &MachineProblem, c: &[f64], allowed: Option<&[bool]>) -> f64 {
    let cv = DVector::from_column_slice(c);
    let r = &prob.sensing * &cv - &prob.y;
    let g = prob.sensing.tr_mul(&r) * 2.0;
    let gmin = (0..c.len())
        .filter(|&i| allowed.is_none_or(|a| a[i]))
        .map(|i| g[i])
        .fold(f64::INFINITY, f64::min);
    let linear_min = if gmin.is_finite() { prob.psi * gmin.min(0.0) } else { 0.0 };
    r.norm_squared() - (g.dot(&cv) - linear_min)
}

/// Unregularized solve restricted to `subset`.
pub(crate) fn solve_restricted(prob: &MachineProblem, work: &LsqWork, subset: &[usize]) -> Candidate {
    let mut allowed = vec![false; prob.n_atoms()];
    for &i in subset {
        allowed[i] = true;
    }
    let r = capped_lsq(work, prob.psi, Some(&allowed), subset, &LsqOptions::default());
    Candidate::from_lsq(prob, &r, Some(&allowed))
}
