//! Correctness certificates and the cone geometry behind them.
//!
//! A slice is `conv({A_i : i in S} ∪ {0})` for a set `S` of at most `p`
//! atoms. With `x~ = x# / gauge_p(x#)`, the gauge_p machine recovers `x#`
//! when the sensing operator is injective on every slice containing `x~`
//! and every other slice is strictly separated from `x~` by some
//! `Q = L'(q)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::Alphabet;
use crate::combinatorics::{subsets_up_to, Combinations};
use crate::gauge::{gauge_p, restricted_gauge, GaugeError, GaugeValue};
use crate::machine::{solve_oracle, MachineError, MachineProblem, SolveResult};
use crate::optcore::{lp_solve, LpProblem, OptError, Status};

/// Slack on `restricted gauge <= 1` when testing `x~` against a slice.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// A certificate needs margin above this.
pub const MARGIN_TOL: f64 = 1e-9;
/// Relative singular-value threshold for injectivity.
pub const INJECTIVITY_TOL: f64 = 1e-8;
/// Relative recovery error accepted when checking the oracle.
pub const RECOVERY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("enumeration needs {required} slices, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },
    #[error("point lies in the slice {0:?}; no separating certificate can exist")]
    InSlice(Vec<usize>),
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("x# has infinite gauge_p")]
    NotRepresentable,
    #[error("linear program ended with status {0}")]
    Solver(Status),
    #[error("certified instance not recovered: relative error {0:.3e}")]
    RecoveryMismatch(f64),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// Sorted distinct atom indices spanning a slice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceRef {
    pub atom_indices: Vec<usize>,
}

impl SliceRef {
    pub fn new(mut indices: Vec<usize>) -> Result<Self, CertifyError> {
        indices.sort_unstable();
        let len = indices.len();
        indices.dedup();
        if indices.is_empty() || indices.len() != len {
            return Err(CertifyError::InvalidSlice(format!("indices must be nonempty and distinct: {indices:?}")));
        }
        Ok(SliceRef { atom_indices: indices })
    }

    pub fn len(&self) -> usize {
        self.atom_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atom_indices.is_empty()
    }

    fn check(&self, a: &Alphabet) -> Result<(), CertifyError> {
        match self.atom_indices.iter().find(|&&i| i >= a.len()) {
            Some(i) => Err(CertifyError::InvalidSlice(format!("index {i} outside alphabet of {} atoms", a.len()))),
            None => Ok(()),
        }
    }

    fn atoms(&self, a: &Alphabet) -> Vec<Vec<f64>> {
        self.atom_indices.iter().map(|&i| a.atom(i).to_vec()).collect()
    }

    /// The slice's vertices: its atoms followed by the origin.
    fn vertices(&self, a: &Alphabet) -> Vec<Vec<f64>> {
        let mut v = self.atoms(a);
        v.push(vec![0.0; a.dim()]);
        v
    }
}

/// All slices with 1..=p atoms, by size and then lexicographically.
pub fn enumerate_slices(a: &Alphabet, p: usize, budget: u64) -> Result<impl Iterator<Item = SliceRef>, CertifyError> {
    let n = a.len();
    let required = subsets_up_to(n, p);
    if required > budget {
        return Err(CertifyError::BudgetExceeded { required, budget });
    }
    Ok((1..=p.min(n)).flat_map(move |k| Combinations::new(n, k)).map(|atom_indices| SliceRef { atom_indices }))
}

/// Whether `x` lies in the slice (restricted gauge at most `1 + tol`).
pub fn slice_contains(a: &Alphabet, slice: &SliceRef, x: &[f64]) -> Result<bool, CertifyError> {
    slice.check(a)?;
    Ok(match restricted_gauge(a, x, &slice.atom_indices)? {
        Some((value, _)) => value <= 1.0 + MEMBERSHIP_TOL,
        None => false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injectivity {
    pub injective: bool,
    /// Smallest singular value of the sensing columns `L(A_S)`.
    pub sigma_min: f64,
    /// Smallest singular value of `L` restricted to `span(A_S)`.
    pub restricted_sigma_min: f64,
    pub restricted_sigma_max: f64,
}

fn check_operator(l: &DMatrix<f64>, a: &Alphabet) -> Result<(), CertifyError> {
    if l.ncols() != a.dim() {
        return Err(CertifyError::DimensionMismatch(format!(
            "operator has {} columns, alphabet dimension is {}",
            l.ncols(),
            a.dim()
        )));
    }
    Ok(())
}

fn check_point(a: &Alphabet, x: &[f64]) -> Result<(), CertifyError> {
    if x.len() != a.dim() {
        return Err(CertifyError::DimensionMismatch(format!("point has length {}, alphabet dimension is {}", x.len(), a.dim())));
    }
    Ok(())
}

/// Injectivity of the operator `l` (an `m x d` matrix) on the span of the
/// slice's atoms.
pub fn slice_injectivity(l: &DMatrix<f64>, a: &Alphabet, slice: &SliceRef) -> Result<Injectivity, CertifyError> {
    check_operator(l, a)?;
    slice.check(a)?;
    let atoms = a.submatrix(&slice.atom_indices);
    let cols = l * &atoms;
    let sv = cols.clone().svd(false, false).singular_values;
    let sigma_min = if cols.ncols() > cols.nrows() { 0.0 } else { sv.min() };

    let svd = atoms.svd(true, false);
    let top = svd.singular_values.max();
    let u = svd.u.expect("requested");
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > 1e-10 * top).collect();
    let basis = DMatrix::from_fn(a.dim(), keep.len(), |r, c| u[(r, keep[c])]);
    let restricted = l * basis;
    let (rmin, rmax) = if restricted.ncols() == 0 {
        (0.0, 0.0)
    } else {
        let rs = restricted.clone().svd(false, false).singular_values;
        let rmin = if restricted.ncols() > restricted.nrows() { 0.0 } else { rs.min() };
        (rmin, rs.max())
    };
    Ok(Injectivity {
        injective: rmax > 0.0 && rmin > INJECTIVITY_TOL * rmax,
        sigma_min,
        restricted_sigma_min: rmin,
        restricted_sigma_max: rmax,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Exact,
    Noisy,
    TheoremConstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub q: Vec<f64>,
    /// `Q = L'(q)`.
    #[serde(rename = "Q")]
    pub big_q: Vec<f64>,
    /// Exact: `min_v -<Q, v - x~>` over the vertices. Noisy: the same
    /// divided by `|v - x~|`, with `|q|_2 = 1`.
    pub margin: f64,
    pub slice: SliceRef,
    pub kind: CertificateKind,
}

impl Certificate {
    /// Recomputes the margin from `Q` and the slice's vertices.
    pub fn verify(&self, a: &Alphabet, x_tilde: &[f64]) -> f64 {
        let normalized = self.kind == CertificateKind::Noisy;
        self.slice
            .vertices(a)
            .iter()
            .map(|v| {
                let diff: Vec<f64> = v.iter().zip(x_tilde).map(|(a, b)| a - b).collect();
                let inner: f64 = diff.iter().zip(&self.big_q).map(|(a, b)| a * b).sum();
                let scale = if normalized { crate::alphabet::norm(&diff) } else { 1.0 };
                -inner / scale
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn separation_lp(
    l: &DMatrix<f64>,
    a: &Alphabet,
    slice: &SliceRef,
    x_tilde: &[f64],
    normalized: bool,
) -> Result<Option<(Vec<f64>, f64)>, CertifyError> {
    check_operator(l, a)?;
    check_point(a, x_tilde)?;
    slice.check(a)?;
    if slice_contains(a, slice, x_tilde)? {
        return Err(CertifyError::InSlice(slice.atom_indices.clone()));
    }
    let m = l.nrows();
    let vertices = slice.vertices(a);
    let xt = DVector::from_column_slice(x_tilde);
    // variables (q, t): maximize t subject to <L(v - x~), q> + t w_v <= 0
    let mut rows = DMatrix::zeros(vertices.len(), m + 1);
    for (r, v) in vertices.iter().enumerate() {
        let diff = DVector::from_column_slice(v) - &xt;
        let image = l * &diff;
        for k in 0..m {
            rows[(r, k)] = image[k];
        }
        rows[(r, m)] = if normalized { diff.norm() } else { 1.0 };
    }
    let mut c = vec![0.0; m + 1];
    c[m] = -1.0;
    let mut lower = vec![-1.0; m + 1];
    let mut upper = vec![1.0; m + 1];
    lower[m] = f64::NEG_INFINITY;
    upper[m] = f64::INFINITY;
    let lp = LpProblem::new(c).with_ineq(rows, vec![0.0; vertices.len()]).with_bounds(lower, upper);
    let sol = lp_solve(&lp, 1e-10)?;
    if sol.status.status != Status::Optimal {
        return Err(CertifyError::Solver(sol.status.status));
    }
    let t = sol.x[m];
    if t <= MARGIN_TOL {
        return Ok(None);
    }
    Ok(Some((sol.x[..m].to_vec(), t)))
}

/// Max-margin separating certificate, or `None` when the best margin is not
/// above [`MARGIN_TOL`].
pub fn find_certificate(
    l: &DMatrix<f64>,
    a: &Alphabet,
    slice: &SliceRef,
    x_tilde: &[f64],
) -> Result<Option<Certificate>, CertifyError> {
    let Some((q, _)) = separation_lp(l, a, slice, x_tilde, false)? else {
        return Ok(None);
    };
    let big_q: Vec<f64> = l.tr_mul(&DVector::from_column_slice(&q)).iter().copied().collect();
    let mut cert = Certificate { q, big_q, margin: 0.0, slice: slice.clone(), kind: CertificateKind::Exact };
    cert.margin = cert.verify(a, x_tilde);
    Ok((cert.margin > MARGIN_TOL).then_some(cert))
}

/// Certificate for noisy recovery: `|q|_2 = 1` and
/// `<Q, x - x~> <= -margin |x - x~|` on the slice.
pub fn find_noisy_certificate(
    l: &DMatrix<f64>,
    a: &Alphabet,
    slice: &SliceRef,
    x_tilde: &[f64],
) -> Result<Option<Certificate>, CertifyError> {
    let Some((q, _)) = separation_lp(l, a, slice, x_tilde, true)? else {
        return Ok(None);
    };
    let qn = crate::alphabet::norm(&q);
    let q: Vec<f64> = q.iter().map(|v| v / qn).collect();
    let big_q: Vec<f64> = l.tr_mul(&DVector::from_column_slice(&q)).iter().copied().collect();
    let mut cert = Certificate { q, big_q, margin: 0.0, slice: slice.clone(), kind: CertificateKind::Noisy };
    cert.margin = cert.verify(a, x_tilde);
    Ok((cert.margin > MARGIN_TOL).then_some(cert))
}

/// Unit directions `(x - x~)/|x - x~|` for `x` on a barycentric grid of
/// `conv(atoms ∪ {0})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSample {
    pub directions: Vec<Vec<f64>>,
    /// Grid points per barycentric axis.
    pub resolution: usize,
    /// The grid point behind each direction.
    pub points: Vec<Vec<f64>>,
}

/// 21 grid points per axis for at most three atoms, 6 otherwise.
pub fn default_resolution(atoms: usize) -> usize {
    if atoms <= 3 {
        21
    } else {
        6
    }
}

/// Grid points of `conv(atoms ∪ {0})` with barycentric weights in
/// multiples of `1/(resolution - 1)`.
fn simplex_grid(atoms: &[Vec<f64>], resolution: usize) -> Vec<Vec<f64>> {
    let d = atoms.first().map_or(0, Vec::len);
    let steps = resolution.max(2) - 1;
    let h = 1.0 / steps as f64;
    let mut out = Vec::new();
    let mut counts = vec![0usize; atoms.len()];
    fn rec(k: usize, left: usize, counts: &mut Vec<usize>, atoms: &[Vec<f64>], h: f64, d: usize, out: &mut Vec<Vec<f64>>) {
        if k == atoms.len() {
            let mut x = vec![0.0; d];
            for (j, atom) in atoms.iter().enumerate() {
                let w = counts[j] as f64 * h;
                for (xi, ai) in x.iter_mut().zip(atom) {
                    *xi += w * ai;
                }
            }
            out.push(x);
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            rec(k + 1, left - c, counts, atoms, h, d, out);
        }
    }
    rec(0, steps, &mut counts, atoms, h, d, &mut out);
    out
}

pub fn cone_sample(atoms: &[Vec<f64>], x_tilde: &[f64], resolution: usize) -> ConeSample {
    let mut directions = Vec::new();
    let mut points = Vec::new();
    for x in simplex_grid(atoms, resolution) {
        let diff: Vec<f64> = x.iter().zip(x_tilde).map(|(a, b)| a - b).collect();
        let n = crate::alphabet::norm(&diff);
        if n > 1e-12 {
            directions.push(diff.iter().map(|v| v / n).collect());
            points.push(x);
        }
    }
    ConeSample { directions, resolution, points }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(argmax index, max-min value)` of the inner products of a sample.
fn max_min(dirs: &[Vec<f64>]) -> Option<(usize, f64)> {
    let mins: Vec<f64> = dirs
        .par_iter()
        .map(|u| dirs.iter().map(|v| dot(u, v)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &m) in mins.iter().enumerate() {
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((i, m));
        }
    }
    best
}

/// Grid approximation of the angle of `cone(conv(atoms ∪ {0}) - x~)`.
/// An empty sample (every grid point equals `x~`) has angle 0.
pub fn cone_angle(atoms: &[Vec<f64>], x_tilde: &[f64], resolution: Option<usize>) -> Result<f64, CertifyError> {
    if atoms.is_empty() {
        return Err(CertifyError::Empty("slice"));
    }
    if atoms.iter().any(|a| a.len() != x_tilde.len()) {
        return Err(CertifyError::DimensionMismatch("atoms and point differ in length".into()));
    }
    let res = resolution.unwrap_or_else(|| default_resolution(atoms.len()));
    let sample = cone_sample(atoms, x_tilde, res);
    Ok(match max_min(&sample.directions) {
        Some((_, v)) => v.clamp(-1.0, 1.0).acos(),
        None => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCertificate {
    /// `Q = L'L(x~ - x_S)`.
    #[serde(rename = "Q")]
    pub big_q: Vec<f64>,
    /// Grid point of the slice attaining the cone angle.
    pub x_slice: Vec<f64>,
    /// `max_v <Q, v - x~>` over the vertices; negative means `Q` certifies.
    pub max_inner_product_over_slice: f64,
    pub cone_angle: f64,
}

impl TheoremCertificate {
    pub fn is_valid(&self) -> bool {
        self.max_inner_product_over_slice < -MARGIN_TOL
    }
}

/// The explicit certificate `Q = L'L(x~ - x_S)` with `x_S` the grid point
/// whose direction attains the cone angle.
pub fn theorem_certificate(
    l: &DMatrix<f64>,
    a: &Alphabet,
    slice: &SliceRef,
    x_tilde: &[f64],
    resolution: Option<usize>,
) -> Result<TheoremCertificate, CertifyError> {
    check_operator(l, a)?;
    check_point(a, x_tilde)?;
    slice.check(a)?;
    if slice_contains(a, slice, x_tilde)? {
        return Err(CertifyError::InSlice(slice.atom_indices.clone()));
    }
    let atoms = slice.atoms(a);
    let res = resolution.unwrap_or_else(|| default_resolution(atoms.len()));
    let sample = cone_sample(&atoms, x_tilde, res);
    let (best, value) = max_min(&sample.directions).ok_or(CertifyError::Empty("cone sample"))?;
    let x_slice = sample.points[best].clone();
    let xt = DVector::from_column_slice(x_tilde);
    let diff = &xt - DVector::from_column_slice(&x_slice);
    let big_q = l.tr_mul(&(l * diff));
    let max_inner = slice
        .vertices(a)
        .iter()
        .map(|v| big_q.dot(&(DVector::from_column_slice(v) - &xt)))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TheoremCertificate {
        big_q: big_q.iter().copied().collect(),
        x_slice,
        max_inner_product_over_slice: max_inner,
        cone_angle: value.clamp(-1.0, 1.0).acos(),
    })
}

fn scaled_target(a: &Alphabet, x_sharp: &[f64], p: usize, budget: u64) -> Result<Option<(f64, Vec<f64>)>, CertifyError> {
    check_point(a, x_sharp)?;
    if x_sharp.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    match gauge_p(a, x_sharp, p, budget)? {
        GaugeValue::Infinite => Err(CertifyError::NotRepresentable),
        GaugeValue::Finite { value, .. } => Ok(Some((value, x_sharp.iter().map(|v| v / value).collect()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalAngle {
    pub angle: f64,
    pub x_tilde: Vec<f64>,
    /// Slice attaining the supremum.
    pub worst: Option<SliceRef>,
    pub slices_checked: usize,
}

/// Largest grid cone angle over the slices of at most `p` atoms that do not
/// contain `x~`; 0 when there are none or `x# = 0`.
pub fn critical_angle(
    a: &Alphabet,
    x_sharp: &[f64],
    p: usize,
    budget: u64,
    resolution: Option<usize>,
) -> Result<CriticalAngle, CertifyError> {
    let Some((_, x_tilde)) = scaled_target(a, x_sharp, p, budget)? else {
        return Ok(CriticalAngle { angle: 0.0, x_tilde: vec![0.0; a.dim()], worst: None, slices_checked: 0 });
    };
    let slices: Vec<SliceRef> = enumerate_slices(a, p, budget)?.collect();
    let angles: Vec<Option<f64>> = slices
        .par_iter()
        .map(|s| -> Result<Option<f64>, CertifyError> {
            if slice_contains(a, s, &x_tilde)? {
                return Ok(None);
            }
            Ok(Some(cone_angle(&s.atoms(a), &x_tilde, resolution)?))
        })
        .collect::<Result<_, _>>()?;
    let mut angle = 0.0;
    let mut worst = None;
    let mut checked = 0;
    for (s, v) in slices.iter().zip(&angles) {
        if let Some(v) = v {
            checked += 1;
            if *v > angle || worst.is_none() {
                angle = v.max(angle);
                worst = Some(s.clone());
            }
        }
    }
    Ok(CriticalAngle { angle, x_tilde, worst, slices_checked: checked })
}

/// `min` over the other atoms `A` of the angle between `A - A#` and `A#`.
pub fn theta_prime(a: &Alphabet, atom_index: usize) -> Result<f64, CertifyError> {
    if atom_index >= a.len() {
        return Err(CertifyError::InvalidSlice(format!("atom {atom_index} outside alphabet")));
    }
    let sharp = a.atom(atom_index);
    let sn = crate::alphabet::norm(sharp);
    if sn == 0.0 {
        return Err(CertifyError::NonPositive("atom norm", 0.0));
    }
    let mut best = f64::INFINITY;
    for (i, atom) in a.atoms().iter().enumerate() {
        if i == atom_index {
            continue;
        }
        let diff: Vec<f64> = atom.iter().zip(sharp).map(|(x, y)| x - y).collect();
        let dn = crate::alphabet::norm(&diff);
        if dn <= 1e-12 {
            continue;
        }
        let c = (dot(&diff, sharp) / (dn * sn)).clamp(-1.0, 1.0);
        best = best.min(c.acos());
    }
    Ok(best)
}

/// Two-sided Hausdorff distance between finite point clouds.
pub fn hausdorff_distance(s1: &[Vec<f64>], s2: &[Vec<f64>]) -> Result<f64, CertifyError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(CertifyError::Empty("point cloud"));
    }
    let one_sided = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .map(|u| y.iter().map(|v| crate::alphabet::distance(u, v)).fold(f64::INFINITY, f64::min))
            .fold(0.0f64, f64::max)
    };
    Ok(one_sided(s1, s2).max(one_sided(s2, s1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceNet {
    pub members: Vec<SliceRef>,
    /// `ln |members|`, an upper bound on the metric entropy at this scale
    /// since the net is greedy.
    pub log_size: f64,
    pub delta: f64,
}

/// Greedy farthest-point `delta`-net of the slices under the Hausdorff
/// distance between sampled cone sections `cone(S - x~) ∩ S^{d-1}`.
pub fn slice_net(
    a: &Alphabet,
    x_sharp: &[f64],
    p: usize,
    delta: f64,
    budget: u64,
    resolution: Option<usize>,
) -> Result<SliceNet, CertifyError> {
    let x_tilde = match scaled_target(a, x_sharp, p, budget)? {
        Some((_, xt)) => xt,
        None => vec![0.0; a.dim()],
    };
    let slices: Vec<SliceRef> = enumerate_slices(a, p, budget)?.collect();
    let samples: Vec<Vec<Vec<f64>>> = slices
        .iter()
        .map(|s| {
            let atoms = s.atoms(a);
            let res = resolution.unwrap_or_else(|| default_resolution(atoms.len()));
            cone_sample(&atoms, &x_tilde, res).directions
        })
        .collect();
    let dist = |i: usize, j: usize| -> f64 {
        match (samples[i].is_empty(), samples[j].is_empty()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => 2.0,
            _ => hausdorff_distance(&samples[i], &samples[j]).expect("nonempty"),
        }
    };
    let mut members = vec![0usize];
    let mut nearest: Vec<f64> = (0..slices.len()).map(|j| dist(0, j)).collect();
    loop {
        let (far, &gap) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("at least one slice");
        if gap <= delta {
            break;
        }
        members.push(far);
        for (j, v) in nearest.iter_mut().enumerate() {
            *v = v.min(dist(far, j));
        }
    }
    let members: Vec<SliceRef> = members.into_iter().map(|i| slices[i].clone()).collect();
    Ok(SliceNet { log_size: (members.len() as f64).ln(), members, delta })
}

/// `max(2 eps / sigma, 2 eps q / gamma)`.
pub fn noisy_error_bound(epsilon: f64, sigma: f64, q_norm: f64, gamma_margin: f64) -> Result<f64, CertifyError> {
    if !(sigma > 0.0) {
        return Err(CertifyError::NonPositive("sigma", sigma));
    }
    if !(gamma_margin > 0.0) {
        return Err(CertifyError::NonPositive("gamma", gamma_margin));
    }
    Ok((2.0 * epsilon / sigma).max(2.0 * epsilon * q_norm / gamma_margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Injectivity,
    Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCheck {
    pub indices: Vec<usize>,
    pub kind: CheckKind,
    /// Restricted smallest singular value or certificate margin.
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub gauge_p: f64,
    pub x_tilde: Vec<f64>,
    pub p: usize,
    pub all_hold: bool,
    pub slices: Vec<SliceCheck>,
    /// Smallest restricted singular value over slices containing `x~`.
    pub sigma: Option<f64>,
    /// Smallest certificate margin over the other slices.
    pub gamma: Option<f64>,
    /// Bound on `|q|_2` over the certificates (noisy reports only).
    pub q_norm: Option<f64>,
}

impl CertReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

fn certify_with(
    l: &DMatrix<f64>,
    a: &Alphabet,
    x_sharp: &[f64],
    p: usize,
    budget: u64,
    noisy: bool,
) -> Result<CertReport, CertifyError> {
    check_operator(l, a)?;
    let Some((g, x_tilde)) = scaled_target(a, x_sharp, p, budget)? else {
        return Ok(CertReport {
            gauge_p: 0.0,
            x_tilde: vec![0.0; a.dim()],
            p,
            all_hold: true,
            slices: Vec::new(),
            sigma: None,
            gamma: None,
            q_norm: None,
        });
    };
    let slices: Vec<SliceRef> = enumerate_slices(a, p, budget)?.collect();
    let checks: Vec<SliceCheck> = slices
        .par_iter()
        .map(|s| -> Result<SliceCheck, CertifyError> {
            if slice_contains(a, s, &x_tilde)? {
                let inj = slice_injectivity(l, a, s)?;
                return Ok(SliceCheck {
                    indices: s.atom_indices.clone(),
                    kind: CheckKind::Injectivity,
                    value: inj.restricted_sigma_min,
                    pass: inj.injective,
                });
            }
            let cert = if noisy {
                find_noisy_certificate(l, a, s, &x_tilde)?
            } else {
                find_certificate(l, a, s, &x_tilde)?
            };
            Ok(SliceCheck {
                indices: s.atom_indices.clone(),
                kind: CheckKind::Certificate,
                value: cert.as_ref().map_or(0.0, |c| c.margin),
                pass: cert.is_some(),
            })
        })
        .collect::<Result<_, _>>()?;
    let min_of = |kind: CheckKind| {
        checks.iter().filter(|c| c.kind == kind).map(|c| c.value).reduce(f64::min)
    };
    Ok(CertReport {
        gauge_p: g,
        x_tilde,
        p,
        all_hold: checks.iter().all(|c| c.pass),
        sigma: min_of(CheckKind::Injectivity),
        gamma: min_of(CheckKind::Certificate),
        q_norm: noisy.then_some(1.0),
        slices: checks,
    })
}

/// Checks the exact-recovery conditions on every slice of at most `p` atoms
/// for the operator `l` (an `m x d` matrix).
pub fn certify_solution(l: &DMatrix<f64>, a: &Alphabet, x_sharp: &[f64], p: usize, budget: u64) -> Result<CertReport, CertifyError> {
    certify_with(l, a, x_sharp, p, budget, false)
}

/// Like [`certify_solution`] with normalized certificates, reporting the
/// margins `(sigma, q, gamma)` of the noisy error bound.
pub fn certify_noisy(l: &DMatrix<f64>, a: &Alphabet, x_sharp: &[f64], p: usize, budget: u64) -> Result<CertReport, CertifyError> {
    certify_with(l, a, x_sharp, p, budget, true)
}

/// Runs the oracle machine with `psi = gauge_p(x#)` on observation `y`.
pub fn oracle_recovery(
    l: &DMatrix<f64>,
    a: &Alphabet,
    x_sharp: &[f64],
    y: &[f64],
    p: usize,
    budget: u64,
) -> Result<(SolveResult, Vec<f64>), CertifyError> {
    check_operator(l, a)?;
    let psi = scaled_target(a, x_sharp, p, budget)?.map_or(0.0, |(g, _)| g);
    let sensing = l * a.matrix();
    let prob = MachineProblem::new(sensing, y.to_vec(), psi, p)?;
    let result = solve_oracle(&prob, budget)?;
    let model = result.decomposition.reconstruct(a);
    Ok((result, model))
}

/// Certifies and, when all conditions hold, confirms that the oracle returns
/// `x#` from exact observations.
pub fn certify_and_recover(
    l: &DMatrix<f64>,
    a: &Alphabet,
    x_sharp: &[f64],
    p: usize,
    budget: u64,
) -> Result<(CertReport, Option<f64>), CertifyError> {
    let report = certify_solution(l, a, x_sharp, p, budget)?;
    if !report.all_hold {
        return Ok((report, None));
    }
    let y: Vec<f64> = (l * DVector::from_column_slice(x_sharp)).iter().copied().collect();
    let (_, model) = oracle_recovery(l, a, x_sharp, &y, p, budget)?;
    let err = crate::alphabet::distance(&model, x_sharp) / crate::alphabet::norm(x_sharp).max(1e-300);
    if err > RECOVERY_TOL {
        return Err(CertifyError::RecoveryMismatch(err));
    }
    Ok((report, Some(err)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use crate::alphabet::{build_canonical, build_spiral_with, toys};
    use crate::linops::LinOp;
    use proptest::prelude::*;

    fn alphabet(atoms: Vec<Vec<f64>>) -> Alphabet {
        let d = atoms[0].len();
        Alphabet::from_atoms(d, atoms).unwrap()
    }

    #[test]
    fn slice_counts() {
        let a = build_canonical(3).unwrap();
        let three = alphabet(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let s: Vec<Vec<usize>> = enumerate_slices(&three, 2, 100).unwrap().map(|s| s.atom_indices).collect();
        assert_eq!(s, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(enumerate_slices(&a, 1, 100).unwrap().count(), 6);
        assert_eq!(enumerate_slices(&a, 3, 100).unwrap().count(), 41);
        assert!(matches!(enumerate_slices(&a, 3, 40), Err(CertifyError::BudgetExceeded { required: 41, .. })));
    }

    #[test]
    fn injectivity_examples() {
        let a = alphabet(vec![vec![3.0, 0.0], vec![0.0, 0.5], vec![1.0, 1.0]]);
        let id = DMatrix::identity(2, 2);
        let s = SliceRef::new(vec![0, 1]).unwrap();
        let inj = slice_injectivity(&id, &a, &s).unwrap();
        assert!(inj.injective);
        assert!((inj.sigma_min - 0.5).abs() < 1e-12);
        // kernel contains A_0/3 - A_2 = (0,-1), so e2-direction is lost
        let proj = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(!slice_injectivity(&proj, &a, &SliceRef::new(vec![0, 2]).unwrap()).unwrap().injective);
        assert!(slice_injectivity(&proj, &a, &SliceRef::new(vec![0]).unwrap()).unwrap().injective);

        let mut hits = 0;
        for seed in 0..100 {
            let atoms: Vec<Vec<f64>> = {
                let mut rng = crate::rng::seeded(1000 + seed);
                (0..3).map(|_| crate::rng::standard_normals(&mut rng, 8)).collect()
            };
            let a = alphabet(atoms);
            let l = LinOp::gaussian(20, 8, seed).to_dense().unwrap();
            hits += usize::from(slice_injectivity(&l, &a, &SliceRef::new(vec![0, 1, 2]).unwrap()).unwrap().injective);
        }
        assert_eq!(hits, 100);
    }

    #[test]
    fn spiral_certificate_against_opposite_atom() {
        let toy = toys::spiral(9).unwrap();
        let a = &toy.alphabet;
        let sharp = toy.x_sharp().to_vec();
        let l = DMatrix::identity(2, 2);
        // the atom making the widest angle with A#
        let far = (0..a.len())
            .min_by(|&i, &j| dot(a.atom(i), &sharp).total_cmp(&dot(a.atom(j), &sharp)))
            .unwrap();
        let s = SliceRef::new(vec![far]).unwrap();
        let cert = find_certificate(&l, a, &s, &sharp).unwrap().expect("separable");
        for v in [a.atom(far).to_vec(), vec![0.0, 0.0]] {
            let diff: Vec<f64> = v.iter().zip(&sharp).map(|(x, y)| x - y).collect();
            assert!(dot(&cert.big_q, &diff) <= -cert.margin + 1e-9);
        }
        assert!(cert.margin > 0.0);
        let inside = SliceRef::new(vec![a.find_atom(&sharp, 1e-12).unwrap()]).unwrap();
        assert!(matches!(find_certificate(&l, a, &inside, &sharp), Err(CertifyError::InSlice(_))));
        let zero = DMatrix::zeros(2, 2);
        assert!(find_certificate(&zero, a, &s, &sharp).unwrap().is_none());
    }

    #[test]
    fn theorem_certificate_identity() {
        let a = alphabet(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let l = DMatrix::identity(2, 2);
        let xt = vec![0.0, 1.0];
        let t = theorem_certificate(&l, &a, &SliceRef::new(vec![0]).unwrap(), &xt, None).unwrap();
        assert!(t.is_valid());
        // the segment [0, e1] seen from e2 spans 45 degrees; the central
        // grid direction sits at 22.5 degrees from each end
        assert!((t.cone_angle - FRAC_PI_4 / 2.0).abs() < 0.02);
        let anti = alphabet(vec![vec![-1.0, 0.0]]);
        let t2 = theorem_certificate(&l, &anti, &SliceRef::new(vec![0]).unwrap(), &[1.0, 0.0], None).unwrap();
        // Q = e1 - x_S with x_S = 0 or beyond; the far vertex gives <Q, -2 e1>
        assert!(t2.max_inner_product_over_slice <= -1.0 + 1e-12);
    }

    #[test]
    fn cone_angle_examples() {
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        assert_eq!(cone_angle(&[e1.clone()], &[0.0, 0.0], None).unwrap(), 0.0);
        let orthant = cone_angle(&[e1.clone(), e2.clone()], &[0.0, 0.0], None).unwrap();
        assert!((orthant - FRAC_PI_4).abs() < 0.02, "{orthant}");
        // a segment through x~ = 0 generates a full line
        assert!((cone_angle(&[e1.clone(), vec![-1.0, 0.0]], &[0.0, 0.0], None).unwrap() - PI).abs() < 1e-12);
        // seen from just above, the segment fills almost a half-plane
        let h = 0.01;
        let half = cone_angle(&[e1.clone(), vec![-1.0, 0.0]], &[0.0, h], Some(201)).unwrap();
        assert!((half - (FRAC_PI_2 - h.atan())).abs() < 1e-9, "{half}");
        // x~ is the only grid point of the slice
        assert_eq!(cone_angle(&[vec![0.0, 0.0]], &[0.0, 0.0], None).unwrap(), 0.0);
        let coarse = cone_angle(&[e1.clone(), e2.clone()], &[0.2, -0.3], Some(11)).unwrap();
        let fine = cone_angle(&[e1, e2], &[0.2, -0.3], Some(41)).unwrap();
        // the cone is bounded by the rays to e1 and to 0; half its width
        let exact = 0.5 * ((0.8f64 * -0.2 + 0.3 * 0.3) / (0.73f64.sqrt() * 0.13f64.sqrt())).acos();
        assert!((coarse - exact).abs() < 0.05, "{coarse} vs {exact}");
        assert!((fine - exact).abs() < (coarse - exact).abs().max(0.01), "{fine} vs {exact}");
    }

    #[test]
    fn cone_sample_directions_are_unit() {
        let s = cone_sample(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 1.0]], &[0.3, 0.3, 0.3], 7);
        assert_eq!(s.directions.len(), 28);
        for (d, x) in s.directions.iter().zip(&s.points) {
            assert!((crate::alphabet::norm(d) - 1.0).abs() < 1e-10);
            let diff: Vec<f64> = x.iter().zip([0.3, 0.3, 0.3]).map(|(a, b)| a - b).collect();
            let n = crate::alphabet::norm(&diff);
            assert!(d.iter().zip(&diff).all(|(u, v)| (u - v / n).abs() < 1e-12));
        }
    }

    #[test]
    fn critical_angle_conventions() {
        let a = build_canonical(2).unwrap();
        assert_eq!(critical_angle(&a, &[0.0, 0.0], 1, 100, None).unwrap().angle, 0.0);
        let c = critical_angle(&a, &[1.0, 0.0], 1, 100, None).unwrap();
        assert_eq!(c.slices_checked, 3);
        // from e1, the slice {-e1} is the segment [-e1, 0] on a ray
        assert!(c.angle > 0.0 && c.angle < FRAC_PI_2);
    }

    #[test]
    fn theta_prime_examples() {
        let pair = alphabet(vec![vec![0.6, 0.8], vec![-0.6, -0.8]]);
        assert!((theta_prime(&pair, 0).unwrap() - PI).abs() < 1e-12);
        let ortho = alphabet(vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![-1.0, 0.0]]);
        assert!((theta_prime(&ortho, 0).unwrap() - FRAC_PI_2).abs() < 1e-12);
    }

    /// The spiral's tangent at t = 1/4 makes about 38.4 degrees with A#;
    /// neighbouring grid atoms approach that direction.
    #[test]
    fn theta_prime_on_fine_spiral() {
        let a = build_spiral_with(501, &[0.25]).unwrap();
        let idx = a.find_atom(&[1.0 / (4.0 * 2f64.sqrt()), 1.0 / (4.0 * 2f64.sqrt())], 1e-12).unwrap();
        let deg = theta_prime(&a, idx).unwrap().to_degrees();
        assert!((deg - 38.44).abs() < 0.05, "{deg}");
    }

    #[test]
    fn hausdorff_examples() {
        let c: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        assert_eq!(hausdorff_distance(&c, &c).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&[vec![0.0]], &[vec![3.0]]).unwrap(), 3.0);
        let circle = |r: f64| -> Vec<Vec<f64>> {
            (0..360).map(|k| (k as f64).to_radians()).map(|t| vec![r * t.cos(), r * t.sin()]).collect()
        };
        assert!((hausdorff_distance(&circle(1.0), &circle(2.0)).unwrap() - 1.0).abs() < 0.01);
        assert!(hausdorff_distance(&[], &c).is_err());
    }

    #[test]
    fn slice_net_sizes() {
        let a = build_canonical(3).unwrap();
        let x = [1.0, 0.0, 0.0];
        assert_eq!(slice_net(&a, &x, 1, 2.0, 100, None).unwrap().members.len(), 1);
        let all = slice_net(&a, &x, 1, 0.0, 100, None).unwrap();
        // {e1} and {-e1} both see only the direction -e1 from e1
        assert_eq!(all.members.len(), 5);
        let half = slice_net(&a, &x, 1, 0.5, 100, None).unwrap();
        assert!((1..=6).contains(&half.members.len()));
        assert_eq!(half, slice_net(&a, &x, 1, 0.5, 100, None).unwrap());
        assert!((half.log_size - (half.members.len() as f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn noisy_bound_arithmetic() {
        assert_eq!(noisy_error_bound(0.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((noisy_error_bound(0.1, 1.0, 1.0, 0.5).unwrap() - 0.4).abs() < 1e-15);
        assert!(noisy_error_bound(0.1, 0.0, 1.0, 0.5).is_err());
        assert!(noisy_error_bound(0.1, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn spiral_toy_end_to_end() {
        let toy = toys::spiral(9).unwrap();
        let l = DMatrix::identity(2, 2);
        let (report, err) = certify_and_recover(&l, &toy.alphabet, toy.x_sharp(), 1, 1000).unwrap();
        assert!(report.all_hold);
        assert!(err.unwrap() <= 1e-9);
        let zero = DMatrix::zeros(2, 2);
        let r = certify_solution(&zero, &toy.alphabet, toy.x_sharp(), 1, 1000).unwrap();
        assert!(!r.all_hold);
        assert!(r.slices.iter().filter(|c| c.kind == CheckKind::Certificate).all(|c| !c.pass));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(json["slices"][0]["indices"].is_array());
    }

    #[test]
    fn gaussian_canonical_end_to_end() {
        let a = build_canonical(6).unwrap();
        let mut x = vec![0.0; 6];
        x[1] = 0.7;
        x[4] = -0.4;
        let l = LinOp::gaussian(12, 6, 3).to_dense().unwrap();
        let (report, err) = certify_and_recover(&l, &a, &x, 2, 10_000).unwrap();
        assert!(report.all_hold);
        assert!(err.unwrap() <= 1e-6);
    }

    proptest! {
        #[test]
        fn hausdorff_is_a_pseudometric(
            a in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..6),
            b in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..6),
            c in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..6),
        ) {
            let ab = hausdorff_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
            let bc = hausdorff_distance(&b, &c).unwrap();
            let ac = hausdorff_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn certificates_reverify(seed in 0u64..1000) {
            let mut rng = crate::rng::seeded(seed);
            let atoms: Vec<Vec<f64>> = (0..4).map(|_| crate::rng::standard_normals(&mut rng, 3)).collect();
            let a = alphabet(atoms);
            let xt = crate::rng::standard_normals(&mut rng, 3);
            let l = LinOp::gaussian(2, 3, seed).to_dense().unwrap();
            let s = SliceRef::new(vec![0, 2]).unwrap();
            if slice_contains(&a, &s, &xt).unwrap() {
                return Ok(());
            }
            if let Some(cert) = find_certificate(&l, &a, &s, &xt).unwrap() {
                let lq: Vec<f64> = l.tr_mul(&DVector::from_column_slice(&cert.q)).iter().copied().collect();
                prop_assert!(crate::alphabet::distance(&lq, &cert.big_q) <= 1e-9);
                for v in s.vertices(&a) {
                    let diff: Vec<f64> = v.iter().zip(&xt).map(|(x, y)| x - y).collect();
                    prop_assert!(dot(&cert.big_q, &diff) <= -cert.margin + 1e-9);
                }
            }
        }
    }
}
