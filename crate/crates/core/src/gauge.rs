//! Gauge, gauge_p, dual norm, conv_p membership and spark over finite
//! alphabets.
//!
//! `gauge(x)` is the least total mass `sum(c)` of a nonnegative combination
//! of atoms equal to `x`; `gauge_p` restricts the combination to at most `p`
//! atoms. Both are `+inf` when no such combination exists.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::Alphabet;
use crate::combinatorics::{binomial, Combinations};
use crate::optcore::{lp_solve, LpProblem, OptError, Status};

/// Default cap on the number of subset problems an enumeration may solve.
pub const DEFAULT_BUDGET: u64 = 2_000_000;
/// Residual (relative to `1 + ||x||`) under which `x` counts as represented.
pub const REPRESENTATION_TOL: f64 = 1e-8;
/// Slack on `gauge_p <= 1` for conv_p membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Relative singular-value threshold for linear dependence.
pub const RANK_TOL: f64 = 1e-9;
const PRUNE_TOL: f64 = 1e-13;
const CHUNK: usize = 8192;

#[derive(Debug, Error)]
pub enum GaugeError {
    #[error("vector has length {got}, alphabet dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sparsity p must be at least 1")]
    InvalidP,
    #[error("enumeration needs {required} subset problems, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error("linear program did not terminate: {0}")]
    Solver(Status),
}

/// `x = sum_k coeffs[k] * A[support[k]]` with sorted support and positive
/// coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Decomposition {
    support: Vec<usize>,
    coeffs: Vec<f64>,
}

impl Decomposition {
    pub fn empty() -> Self {
        Decomposition::default()
    }

    pub fn single(index: usize, coeff: f64) -> Self {
        Decomposition::from_pairs(vec![(index, coeff)])
    }

    /// Sorts by index, merges duplicates and drops nonpositive entries.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut support: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut coeffs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, c) in pairs {
            if support.last() == Some(&i) {
                *coeffs.last_mut().expect("aligned") += c;
            } else {
                support.push(i);
                coeffs.push(c);
            }
        }
        let (support, coeffs) = support.into_iter().zip(coeffs).filter(|(_, c)| *c > 0.0).unzip();
        Decomposition { support, coeffs }
    }

    /// Keeps entries of a dense coefficient vector above `prune`.
    pub fn from_dense(c: &[f64], prune: f64) -> Self {
        Decomposition::from_pairs(c.iter().copied().enumerate().filter(|(_, v)| *v > prune).collect())
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Total mass `sum(c)`.
    pub fn mass(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n];
        for (&i, &v) in self.support.iter().zip(&self.coeffs) {
            c[i] = v;
        }
        c
    }

    pub fn reconstruct(&self, a: &Alphabet) -> Vec<f64> {
        let mut x = vec![0.0; a.dim()];
        for (&i, &c) in self.support.iter().zip(&self.coeffs) {
            for (xj, aj) in x.iter_mut().zip(a.atom(i)) {
                *xj += c * aj;
            }
        }
        x
    }
}

/// A gauge value: finite with a minimizing decomposition, or `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeValue {
    Finite { value: f64, decomposition: Decomposition },
    Infinite,
}

impl GaugeValue {
    pub fn value(&self) -> f64 {
        match self {
            GaugeValue::Finite { value, .. } => *value,
            GaugeValue::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, GaugeValue::Finite { .. })
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        match self {
            GaugeValue::Finite { decomposition, .. } => Some(decomposition),
            GaugeValue::Infinite => None,
        }
    }
}

fn check_dim(a: &Alphabet, x: &[f64]) -> Result<(), GaugeError> {
    if x.len() != a.dim() {
        return Err(GaugeError::DimensionMismatch { expected: a.dim(), got: x.len() });
    }
    Ok(())
}

fn zero_value() -> GaugeValue {
    GaugeValue::Finite { value: 0.0, decomposition: Decomposition::empty() }
}

/// Least mass over nonnegative combinations of the atoms in `subset`
/// reproducing `x`; `None` when `x` is not in their cone.
pub fn restricted_gauge(a: &Alphabet, x: &[f64], subset: &[usize]) -> Result<Option<(f64, Decomposition)>, GaugeError> {
    let xv = DVector::from_column_slice(x);
    let xnorm = xv.norm();
    if xnorm == 0.0 {
        return Ok(Some((0.0, Decomposition::empty())));
    }
    let tol = REPRESENTATION_TOL * (1.0 + xnorm);
    let m = a.submatrix(subset);
    let k = subset.len();
    // full column rank: the representation is unique when it exists
    if k <= a.dim() {
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() > RANK_TOL * smax {
            let c = svd.solve(&xv, 0.0).expect("factors computed");
            if (&m * &c - &xv).norm() > tol || c.iter().any(|&v| v < -tol) {
                return Ok(None);
            }
            let pairs = c.iter().enumerate().map(|(t, &v)| (subset[t], v.max(0.0))).collect();
            return Ok(Some(finish(a, pairs)));
        }
    }
    let p = LpProblem::new(vec![1.0; k]).with_eq(m.clone(), x.to_vec());
    let s = lp_solve(&p, 1e-10)?;
    match s.status.status {
        Status::Optimal => {
            let c = DVector::from_vec(s.x.clone());
            if (&m * &c - &xv).norm() > tol {
                return Ok(None);
            }
            let pairs = s.x.iter().enumerate().map(|(t, &v)| (subset[t], v.max(0.0))).collect();
            Ok(Some(finish(a, pairs)))
        }
        Status::Infeasible => Ok(None),
        other => Err(GaugeError::Solver(other)),
    }
}

fn finish(a: &Alphabet, pairs: Vec<(usize, f64)>) -> (f64, Decomposition) {
    let top = pairs.iter().fold(0.0f64, |m, p| m.max(p.1));
    let dec = Decomposition::from_pairs(pairs.into_iter().filter(|p| p.1 > PRUNE_TOL * (1.0 + top)).collect());
    debug_assert!(dec.support().iter().all(|&i| i < a.len()));
    (dec.mass(), dec)
}

/// The gauge of `x`: one LP over all atoms.
pub fn gauge(a: &Alphabet, x: &[f64]) -> Result<GaugeValue, GaugeError> {
    check_dim(a, x)?;
    if x.iter().all(|&v| v == 0.0) {
        return Ok(zero_value());
    }
    let all: Vec<usize> = (0..a.len()).collect();
    Ok(match restricted_gauge(a, x, &all)? {
        Some((value, decomposition)) => GaugeValue::Finite { value, decomposition },
        None => GaugeValue::Infinite,
    })
}

/// The gauge_p of `x`, by enumerating all p-subsets of atoms.
///
/// For `p >= d` this is the full gauge (an optimal basic solution of the
/// gauge LP has at most `d` nonzeros), computed by a single LP. Otherwise
/// subsets are scanned in lexicographic order; the first subset attaining
/// the minimum wins.
pub fn gauge_p(a: &Alphabet, x: &[f64], p: usize, budget: u64) -> Result<GaugeValue, GaugeError> {
    check_dim(a, x)?;
    if p == 0 {
        return Err(GaugeError::InvalidP);
    }
    if x.iter().all(|&v| v == 0.0) {
        return Ok(zero_value());
    }
    if p >= a.dim() || p >= a.len() {
        return gauge(a, x);
    }
    let required = binomial(a.len(), p);
    if required > budget {
        return Err(GaugeError::BudgetExceeded { required, budget });
    }
    let mut best: Option<(f64, Decomposition)> = None;
    let mut subsets = Combinations::new(a.len(), p);
    loop {
        let chunk: Vec<Vec<usize>> = subsets.by_ref().take(CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        let results: Vec<Option<(f64, Decomposition)>> = chunk
            .par_iter()
            .map(|s| restricted_gauge(a, x, s))
            .collect::<Result<_, _>>()?;
        for (value, dec) in results.into_iter().flatten() {
            let better = match &best {
                None => true,
                Some((b, _)) => value < b - 1e-12 * (1.0 + b),
            };
            if better {
                best = Some((value, dec));
            }
        }
    }
    Ok(match best {
        Some((value, decomposition)) => GaugeValue::Finite { value, decomposition },
        None => GaugeValue::Infinite,
    })
}

/// `max_A <z, A>` by direct scan.
pub fn dual_norm(a: &Alphabet, z: &[f64]) -> Result<f64, GaugeError> {
    check_dim(a, z)?;
    if !a.flags().symmetric_closure && !a.is_symmetric() {
        log::warn!("dual norm of a non-symmetric alphabet is only a support function");
    }
    Ok(a
        .atoms()
        .iter()
        .map(|atom| atom.iter().zip(z).map(|(p, q)| p * q).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Whether `x` lies in the union of slices with at most `p` atoms.
pub fn conv_p_member(a: &Alphabet, x: &[f64], p: usize, budget: u64) -> Result<bool, GaugeError> {
    Ok(gauge_p(a, x, p, budget)?.value() <= 1.0 + MEMBERSHIP_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Spark {
    Finite(usize),
    Infinite,
}

/// Whether the columns of `m` are linearly dependent.
pub fn columns_dependent(m: &DMatrix<f64>) -> bool {
    if m.ncols() > m.nrows() {
        return true;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.min() <= RANK_TOL * sv.max()
}

/// Smallest number of linearly dependent atoms.
pub fn spark(a: &Alphabet, budget: u64) -> Result<Spark, GaugeError> {
    let top = a.len().min(a.dim() + 1);
    let mut spent: u64 = 0;
    for k in 1..=top {
        let count = binomial(a.len(), k);
        spent = spent.saturating_add(count);
        if spent > budget {
            return Err(GaugeError::BudgetExceeded { required: spent, budget });
        }
        if k > a.dim() {
            return Ok(Spark::Finite(k));
        }
        let found = Combinations::new(a.len(), k).any(|s| columns_dependent(&a.submatrix(&s)));
        if found {
            return Ok(Spark::Finite(k));
        }
    }
    Ok(Spark::Infinite)
}
