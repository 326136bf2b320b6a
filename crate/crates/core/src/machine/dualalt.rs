//! Dual alternating heuristic for the gauge_p machine.
//!
//! For a fixed support `S` the regularized restricted primal
//!
//! ```text
//! P(S) = min ||B c - y||^2 + ||c_S||^2 / gamma   s.t.  C c <= g,  c = 0 off S
//! ```
//!
//! with `C = [-I; 1']` and `g = (0, psi)` has the concave dual
//!
//! ```text
//! D(lambda, mu; S) = -|lambda|^2 / 4 + <y, lambda> - psi mu_{n+1}
//!                    - gamma / 4 sum_{i in S} ((B' lambda)_i - (C' mu)_i)^2
//! ```
//!
//! over `mu >= 0`, obtained by eliminating the residual and `c_S` from the
//! Lagrangian. The iteration alternates a dual solve on `S_k` with the
//! selection of the `p` largest scores `((B' lambda)_i - (C' mu)_i)^2`.

use std::collections::{HashMap, HashSet};

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::optcore::{capped_lsq, LsqOptions, LsqResult, LsqWork, SolveStatus, Status};

use super::{
    frank_wolfe_bound, solve_restricted, Candidate, MachineError, MachineProblem, SolveResult, SolverKind, TraceEntry,
};

/// Slack allowed in weak duality and strong duality checks.
pub const DUALITY_TOL: f64 = 1e-6;

/// `max(1e4 psi^2 / max(|y|^2, 1e-12), 1e8 max(1, psi^2))`.
pub fn default_gamma(prob: &MachineProblem) -> f64 {
    let psi2 = prob.psi() * prob.psi();
    (1e4 * psi2 / prob.y().norm_squared().max(1e-12)).max(1e8 * psi2.max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// Duals of `-c_i <= 0` followed by the dual of `sum(c) <= psi`.
    pub mu: Vec<f64>,
    pub support: Vec<usize>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FixedPoint,
    Cycle,
    IterLimit,
}

/// Explicit verification of a reported fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCheck {
    pub support: Vec<usize>,
    /// Regularized restricted primal optimum.
    pub primal: f64,
    /// Dual objective at the recovered dual point.
    pub dual: f64,
    /// KKT residual of the inner problem.
    pub kkt_residual: f64,
    pub kkt_ok: bool,
    /// The support is exactly the top-p selection of its own scores.
    pub top_p_ok: bool,
    /// Change of the primal-dual gap to the unregularized restricted optimum
    /// when gamma grows tenfold.
    pub gamma_sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualAltOutput {
    /// Every distinct support visited, in visiting order.
    pub candidates: Vec<Vec<usize>>,
    pub result: SolveResult,
    pub stop: StopReason,
    pub gamma: f64,
    pub final_state: DualState,
    pub fixed_point: Option<FixedPointCheck>,
    /// Largest `D(lambda_k, mu_k; S_{k+1}) - P(S_{k+1})` seen.
    pub max_weak_duality_excess: f64,
}

/// `D(lambda, mu; S)`.
pub fn dual_objective(prob: &MachineProblem, state: &DualState) -> f64 {
    let n = prob.n_atoms();
    let lambda = DVector::from_column_slice(&state.lambda);
    let btl = prob.sensing().tr_mul(&lambda);
    let cap = state.mu[n];
    let penalty: f64 = state
        .support
        .iter()
        .map(|&i| {
            let v = btl[i] - (cap - state.mu[i]);
            v * v
        })
        .sum();
    -0.25 * lambda.norm_squared() + prob.y().dot(&lambda) - prob.psi() * cap - 0.25 * state.gamma * penalty
}

/// Dual point attached to a regularized restricted solution: `lambda =
/// 2(y - B c)`, `mu_{n+1}` twice the cap multiplier, `mu_i` on `S` from
/// stationarity and off `S` the smallest nonnegative value, which leaves the
/// score of an atom outside `S` at the square of its KKT violation.
pub fn recover_dual(prob: &MachineProblem, support: &[usize], c: &[f64], gamma: f64) -> DualState {
    let n = prob.n_atoms();
    let cv = DVector::from_column_slice(c);
    let r = prob.y() - prob.sensing() * &cv;
    let mut w = prob.sensing().tr_mul(&r);
    let in_s = membership(n, support);
    for i in 0..n {
        if in_s[i] {
            w[i] -= c[i] / gamma;
        }
    }
    // eta equals w on the positive coefficients whenever the cap binds
    let positive: Vec<usize> = support.iter().copied().filter(|&i| c[i] > 0.0).collect();
    let mass: f64 = c.iter().sum();
    let eta = if !positive.is_empty() && mass >= prob.psi() * (1.0 - 1e-12) {
        (positive.iter().map(|&i| w[i]).sum::<f64>() / positive.len() as f64).max(0.0)
    } else if positive.is_empty() && prob.psi() == 0.0 {
        support.iter().map(|&i| w[i]).fold(0.0f64, f64::max)
    } else {
        0.0
    };
    let mut mu = vec![0.0; n + 1];
    for i in 0..n {
        mu[i] = (2.0 * (eta - w[i])).max(0.0);
    }
    mu[n] = 2.0 * eta;
    DualState { lambda: (r * 2.0).iter().copied().collect(), mu, support: support.to_vec(), gamma }
}

fn membership(n: usize, support: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in support {
        m[i] = true;
    }
    m
}

fn scores(prob: &MachineProblem, state: &DualState) -> Vec<f64> {
    let n = prob.n_atoms();
    let btl = prob.sensing().tr_mul(&DVector::from_column_slice(&state.lambda));
    (0..n)
        .map(|i| {
            let v = btl[i] - (state.mu[n] - state.mu[i]);
            v * v
        })
        .collect()
}

/// Indices of the `p` largest scores, ties to the lowest index, sorted.
pub fn select_top_p(scores: &[f64], p: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut s: Vec<usize> = order.into_iter().take(p).collect();
    s.sort_unstable();
    s
}

struct Inner {
    lsq: LsqResult,
    state: DualState,
}

fn solve_inner(prob: &MachineProblem, work: &LsqWork, support: &[usize], gamma: f64) -> Inner {
    let allowed = membership(prob.n_atoms(), support);
    let opts = LsqOptions { ridge: 1.0 / gamma, ..LsqOptions::default() };
    let lsq = capped_lsq(work, prob.psi(), Some(&allowed), support, &opts);
    let state = recover_dual(prob, support, &lsq.c, gamma);
    Inner { lsq, state }
}

/// Runs the alternating iteration from the support selected at `c = 0`.
pub fn solve_dual_alternating(prob: &MachineProblem, gamma: f64, max_iter: usize) -> Result<DualAltOutput, MachineError> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(MachineError::InvalidGamma(gamma));
    }
    let n = prob.n_atoms();
    let p = prob.p();
    let work = LsqWork::new(prob.sensing(), prob.y());
    let start = recover_dual(prob, &[], &vec![0.0; n], gamma);
    let mut support = select_top_p(&scores(prob, &start), p);

    let mut cache: HashMap<Vec<usize>, Inner> = HashMap::new();
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    let mut candidates = Vec::new();
    let mut trace = Vec::new();
    let mut stop = StopReason::IterLimit;
    let mut max_excess = f64::NEG_INFINITY;
    let mut fixed_point = None;
    let mut iterations = 0;
    let mut last_state = start;
    let mut inner_status = SolveStatus::new(Status::Optimal, 0, 0.0);

    for k in 0..max_iter {
        iterations = k + 1;
        if !visited.insert(support.clone()) {
            stop = StopReason::Cycle;
            break;
        }
        candidates.push(support.clone());
        let inner = cache.remove(&support).unwrap_or_else(|| solve_inner(prob, &work, &support, gamma));
        if !inner.lsq.status.is_optimal() {
            inner_status = inner.lsq.status;
        }
        let dual = dual_objective(prob, &inner.state);
        trace.push(TraceEntry { iteration: k, support: support.clone(), primal: inner.lsq.objective, bound: dual });
        let sc = scores(prob, &inner.state);
        let next = select_top_p(&sc, p);

        // weak duality: the current dual point is feasible for every support
        let mut probe = inner.state.clone();
        probe.support = next.clone();
        let next_inner = if next == support { None } else { Some(solve_inner(prob, &work, &next, gamma)) };
        let next_primal = next_inner.as_ref().map_or(inner.lsq.objective, |i| i.lsq.objective);
        let excess = dual_objective(prob, &probe) - next_primal;
        max_excess = max_excess.max(excess);
        if excess > DUALITY_TOL {
            warn!("weak duality violated by {excess:.3e} at iteration {k}");
        }

        if next == support {
            let kkt = inner.lsq.status.kkt_residual;
            let (min_in, max_out) = split_scores(&sc, &support);
            let sensitivity = gamma_sensitivity(prob, &work, &support, gamma, inner.lsq.objective);
            if sensitivity >= DUALITY_TOL {
                warn!("gamma = {gamma:.3e} may be too small: tenfold increase moves the gap by {sensitivity:.3e}");
            }
            fixed_point = Some(FixedPointCheck {
                support: support.clone(),
                primal: inner.lsq.objective,
                dual,
                kkt_residual: kkt,
                kkt_ok: inner.lsq.status.is_optimal() && kkt <= 1e-7 && (dual - inner.lsq.objective).abs() <= DUALITY_TOL,
                top_p_ok: min_in >= max_out,
                gamma_sensitivity: sensitivity,
            });
            last_state = inner.state;
            stop = StopReason::FixedPoint;
            break;
        }
        last_state = inner.state;
        if let Some(ni) = next_inner {
            cache.insert(next.clone(), ni);
        }
        support = next;
    }

    let mut best = Candidate::zero(prob);
    for s in &candidates {
        let cand = solve_restricted(prob, &work, s);
        if cand.better_than(&best) {
            best = cand;
        }
    }
    let relaxation = capped_lsq(&work, prob.psi(), None, &best.support, &LsqOptions::default());
    let lower_bound = frank_wolfe_bound(prob, &relaxation.c, None);
    let status_kind = match (stop, inner_status.status) {
        (StopReason::IterLimit, _) => Status::IterLimit,
        (_, s) => s,
    };
    let status = SolveStatus::new(status_kind, iterations, best.status.kkt_residual);
    let result = best.into_result(SolverKind::DualAlt, status, lower_bound, trace);
    Ok(DualAltOutput {
        candidates,
        result,
        stop,
        gamma,
        final_state: last_state,
        fixed_point,
        max_weak_duality_excess: max_excess,
    })
}

/// `(min score on S, max score off S)`.
fn split_scores(sc: &[f64], support: &[usize]) -> (f64, f64) {
    let in_s = membership(sc.len(), support);
    let mut min_in = f64::INFINITY;
    let mut max_out = f64::NEG_INFINITY;
    for (i, &s) in sc.iter().enumerate() {
        if in_s[i] {
            min_in = min_in.min(s);
        } else {
            max_out = max_out.max(s);
        }
    }
    (min_in, max_out)
}

fn gamma_sensitivity(prob: &MachineProblem, work: &LsqWork, support: &[usize], gamma: f64, primal: f64) -> f64 {
    let exact = solve_restricted(prob, work, support).objective;
    let stiffer = solve_inner(prob, work, support, 10.0 * gamma).lsq.objective;
    ((primal - exact) - (stiffer - exact)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    use crate::alphabet::build_canonical;
    use crate::linops::{sensing_matrix, LinOp};
    use crate::machine::{solve_convex, solve_oracle};
    use crate::optcore::{qp_solve, QpProblem};
    use crate::rng::{seeded, standard_normals};

    fn random_problem(seed: u64, m: usize, n: usize, psi: f64, p: usize) -> MachineProblem {
        let mut rng = seeded(seed);
        let b = DMatrix::from_vec(m, n, standard_normals(&mut rng, m * n));
        let y = standard_normals(&mut rng, m);
        MachineProblem::new(b, y, psi, p).unwrap()
    }

    #[test]
    fn canonical_single_atom() {
        let b = sensing_matrix(&LinOp::identity(2), &build_canonical(2).unwrap()).unwrap();
        let prob = MachineProblem::new(b, vec![1.0, 0.0], 1.0, 1).unwrap();
        let out = solve_dual_alternating(&prob, default_gamma(&prob), 50).unwrap();
        assert_eq!(out.stop, StopReason::FixedPoint);
        let fp = out.fixed_point.unwrap();
        assert_eq!(fp.support, vec![0]);
        assert!(fp.kkt_ok && fp.top_p_ok);
        assert_eq!(out.result.support(), &[0]);
        assert!((out.result.decomposition.coeffs()[0] - 1.0).abs() < 1e-12);
        let oracle = solve_oracle(&prob, 10).unwrap();
        assert_eq!(oracle.decomposition.support(), out.result.support());
    }

    #[test]
    fn full_p_is_one_step_convex() {
        for seed in 0..5 {
            let prob = random_problem(seed, 4, 7, 0.8, 7);
            let out = solve_dual_alternating(&prob, default_gamma(&prob), 10).unwrap();
            assert_eq!(out.stop, StopReason::FixedPoint);
            assert_eq!(out.candidates.len(), 1);
            let convex = solve_convex(&prob).unwrap();
            assert!((out.result.objective - convex.objective).abs() < 1e-6);
        }
    }

    /// Maximizes the dual directly with the general QP solver over
    /// `(lambda, mu_S, mu_cap)` and compares with the primal.
    #[test]
    fn dual_formula_matches_direct_qp() {
        for seed in 0..8 {
            let prob = random_problem(100 + seed, 3, 5, 0.4 + 0.5 * seed as f64, 2);
            let gamma = 10.0;
            let support = vec![(seed % 5) as usize, ((seed + 2) % 5) as usize];
            let mut support = support;
            support.sort_unstable();
            let (m, k) = (prob.m(), support.len());
            let nv = m + k + 1;
            let mut q = DMatrix::zeros(nv, nv);
            for i in 0..m {
                q[(i, i)] = 0.5;
            }
            for (j, &i) in support.iter().enumerate() {
                let mut a = DVector::zeros(nv);
                for r in 0..m {
                    a[r] = prob.sensing()[(r, i)];
                }
                a[m + j] = 1.0;
                a[m + k] = -1.0;
                q += &a * a.transpose() * (0.5 * gamma);
            }
            let mut lin = vec![0.0; nv];
            for r in 0..m {
                lin[r] = -prob.y()[r];
            }
            lin[m + k] = prob.psi();
            let mut lower = vec![0.0; nv];
            for v in lower.iter_mut().take(m) {
                *v = f64::NEG_INFINITY;
            }
            let qp = QpProblem::new(q, lin).with_bounds(lower, vec![f64::INFINITY; nv]);
            let sol = qp_solve(&qp, 1e-10).unwrap();
            let direct = -sol.objective;

            let work = LsqWork::new(prob.sensing(), prob.y());
            let inner = solve_inner(&prob, &work, &support, gamma);
            let recovered = dual_objective(&prob, &inner.state);
            assert!((direct - inner.lsq.objective).abs() < 1e-8, "strong duality {direct} vs {}", inner.lsq.objective);
            assert!((recovered - direct).abs() < 1e-8, "recovered {recovered} vs {direct}");
        }
    }

    #[test]
    fn weak_duality_and_candidates() {
        for seed in 0..20 {
            let prob = random_problem(200 + seed, 5, 10, 1.5, 2);
            let out = solve_dual_alternating(&prob, default_gamma(&prob), 100).unwrap();
            assert!(out.max_weak_duality_excess <= DUALITY_TOL, "{}", out.max_weak_duality_excess);
            out.result.check_feasible(&prob).unwrap();
            assert!(out.result.lower_bound <= out.result.objective + 1e-6);
            let distinct: HashSet<_> = out.candidates.iter().collect();
            assert_eq!(distinct.len(), out.candidates.len());
            if let Some(fp) = &out.fixed_point {
                assert!(fp.kkt_ok && fp.top_p_ok, "{fp:?}");
                assert!((fp.primal - fp.dual).abs() <= DUALITY_TOL);
            }
        }
    }

    #[test]
    fn rejects_bad_gamma() {
        let prob = random_problem(1, 2, 3, 1.0, 1);
        assert!(matches!(solve_dual_alternating(&prob, 0.0, 5), Err(MachineError::InvalidGamma(_))));
        assert!(matches!(solve_dual_alternating(&prob, f64::NAN, 5), Err(MachineError::InvalidGamma(_))));
    }

    #[test]
    fn top_p_ties_go_to_lowest_index() {
        assert_eq!(select_top_p(&[1.0, 2.0, 2.0, 0.5], 2), vec![1, 2]);
        assert_eq!(select_top_p(&[0.0, 0.0, 0.0], 2), vec![0, 1]);
        assert_eq!(select_top_p(&[3.0, 0.0, 3.0, 3.0], 2), vec![0, 2]);
    }
}
