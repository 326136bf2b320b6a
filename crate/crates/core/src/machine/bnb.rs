//! Best-first branch-and-bound for the big-M formulation
//!
//! ```text
//! min ||B c - y||^2   s.t.  c >= 0,  sum(c) <= psi,  c_i <= psi s_i,
//!                           sum(s) = p,  s in {0,1}^n
//! ```
//!
//! Dropping the cardinality row leaves the capped problem on the columns
//! not fixed to zero, which is the node relaxation.
//!
//! When `p` reaches the rank of `B`, every p-subset spans the whole range and
//! optimal supports are typically tied. The search then finishes with a
//! pruned pass over the p-subsets that applies the oracle's tie-break.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::combinatorics::binomial;
use crate::gauge::RANK_TOL;
use crate::optcore::{capped_lsq, LsqOptions, LsqWork, SolveStatus, Status};

use super::{solve_restricted, Candidate, MachineError, MachineProblem, SolveResult, SolverKind, TraceEntry, TIE_TOL};

/// Largest number of p-subsets the tie pass will consider.
pub const TIE_PASS_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    pub time_limit: Option<Duration>,
    /// Nodes whose bound is within this of the incumbent are pruned.
    pub gap_tol: f64,
    pub max_nodes: Option<usize>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions { time_limit: None, gap_tol: 1e-9, max_nodes: None }
    }
}

struct Node {
    bound: f64,
    id: usize,
    ones: Vec<usize>,
    zeros: Vec<bool>,
    /// Relaxation inherited from the parent when fixing `s_j = 1` leaves it
    /// unchanged.
    relaxation: Option<Candidate>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: smallest bound first, then oldest node
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

pub fn solve_bnb(
    prob: &MachineProblem,
    warm_starts: &[Vec<usize>],
    time_limit: Option<Duration>,
) -> Result<SolveResult, MachineError> {
    solve_bnb_with(prob, warm_starts, &BnbOptions { time_limit, ..BnbOptions::default() })
}

pub fn solve_bnb_with(prob: &MachineProblem, warm_starts: &[Vec<usize>], opts: &BnbOptions) -> Result<SolveResult, MachineError> {
    let started = Instant::now();
    let n = prob.n_atoms();
    let p = prob.p();
    let work = LsqWork::new(prob.sensing(), prob.y());
    let lsq_opts = LsqOptions::default();

    let mut incumbent = Candidate::zero(prob);
    let mut trace = Vec::new();
    for s in warm_starts {
        if s.len() > p || s.iter().any(|&i| i >= n) {
            continue;
        }
        let cand = solve_restricted(prob, &work, s);
        if cand.better_than(&incumbent) {
            incumbent = cand;
        }
    }
    trace.push(TraceEntry { iteration: 0, support: incumbent.support.clone(), primal: incumbent.objective, bound: f64::NEG_INFINITY });

    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, id: 0, ones: Vec::new(), zeros: vec![false; n], relaxation: None });
    let mut next_id = 1;
    let mut explored = 0usize;
    let mut pruned_bound = f64::INFINITY;
    let mut interrupted = false;
    let mut worst_kkt: f64 = 0.0;

    while let Some(node) = heap.pop() {
        if node.bound >= incumbent.objective - opts.gap_tol {
            pruned_bound = pruned_bound.min(node.bound);
            continue;
        }
        let out_of_time = opts.time_limit.is_some_and(|t| started.elapsed() >= t);
        let out_of_nodes = opts.max_nodes.is_some_and(|m| explored >= m);
        if out_of_time || out_of_nodes {
            pruned_bound = pruned_bound.min(node.bound);
            interrupted = true;
            break;
        }
        explored += 1;

        let allowed: Vec<bool> = node.zeros.iter().map(|z| !z).collect();
        let free: Vec<usize> = (0..n).filter(|&i| allowed[i] && !node.ones.contains(&i)).collect();
        let exact = node.ones.len() == p || free.len() + node.ones.len() <= p;
        let relax = match node.relaxation {
            Some(r) => r,
            None => {
                let cols: Vec<bool> = if node.ones.len() == p {
                    (0..n).map(|i| node.ones.contains(&i)).collect()
                } else {
                    allowed.clone()
                };
                let r = capped_lsq(&work, prob.psi(), Some(&cols), &node.ones, &lsq_opts);
                Candidate::from_lsq(prob, &r, Some(&cols))
            }
        };
        worst_kkt = worst_kkt.max(relax.status.kkt_residual);
        let bound = relax.bound.max(node.bound);

        if exact || relax.support.len() <= p {
            if relax.better_than(&incumbent) {
                incumbent = relax;
                trace.push(TraceEntry {
                    iteration: explored,
                    support: incumbent.support.clone(),
                    primal: incumbent.objective,
                    bound,
                });
            }
            continue;
        }
        if bound >= incumbent.objective - opts.gap_tol {
            pruned_bound = pruned_bound.min(bound);
            continue;
        }
        let branch = free
            .iter()
            .copied()
            .filter(|&i| relax.c[i] > 0.0)
            .max_by(|&a, &b| relax.c[a].total_cmp(&relax.c[b]).then(b.cmp(&a)))
            .expect("a relaxation with more than p nonzeros has a free nonzero");

        let mut ones = node.ones.clone();
        ones.push(branch);
        ones.sort_unstable();
        let keep = if ones.len() < p { Some(relax.clone()) } else { None };
        heap.push(Node { bound, id: next_id, ones, zeros: node.zeros.clone(), relaxation: keep });
        let mut zeros = node.zeros;
        zeros[branch] = true;
        heap.push(Node { bound, id: next_id + 1, ones: node.ones, zeros, relaxation: None });
        next_id += 2;
    }

    if !interrupted && ties_expected(prob) && binomial(n, p) <= TIE_PASS_BUDGET {
        let tied = lexicographic_pass(prob, &work, incumbent.objective);
        if tied.objective <= incumbent.objective + TIE_TOL * (1.0 + incumbent.objective.abs()) {
            incumbent = tied;
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let lower_bound = pruned_bound.min(open_bound).min(incumbent.objective);
    let status = SolveStatus::new(
        if interrupted { Status::IterLimit } else { Status::Optimal },
        explored,
        worst_kkt,
    );
    trace.push(TraceEntry { iteration: explored, support: incumbent.support.clone(), primal: incumbent.objective, bound: lower_bound });
    Ok(incumbent.into_result(SolverKind::BnB, status, lower_bound, trace))
}

/// `p` at least the numerical rank of the sensing matrix.
fn ties_expected(prob: &MachineProblem) -> bool {
    let sv = prob.sensing().clone().svd(false, false).singular_values;
    let top = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * top).count();
    prob.p() >= rank
}

/// Best p-subset solution under the oracle's ordering, skipping subtrees of
/// the lexicographic subset tree whose relaxation is worse than `target`.
fn lexicographic_pass(prob: &MachineProblem, work: &LsqWork, target: f64) -> Candidate {
    let n = prob.n_atoms();
    let p = prob.p();
    let cutoff = target + TIE_TOL * (1.0 + target.abs());
    let mut best = Candidate::zero(prob);
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let next = prefix.last().map_or(0, |&i| i + 1);
        if prefix.len() + (n - next) < p {
            continue;
        }
        if prefix.len() == p {
            let cand = solve_restricted(prob, work, &prefix);
            if cand.better_than(&best) {
                best = cand;
            }
            continue;
        }
        if !prefix.is_empty() {
            let allowed: Vec<bool> = (0..n).map(|i| i >= next || prefix.contains(&i)).collect();
            let r = capped_lsq(work, prob.psi(), Some(&allowed), &prefix, &LsqOptions::default());
            if Candidate::from_lsq(prob, &r, Some(&allowed)).bound > cutoff {
                continue;
            }
        }
        for j in (next..n).rev() {
            let mut child = prefix.clone();
            child.push(j);
            stack.push(child);
        }
    }
    best
}
