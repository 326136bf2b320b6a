use rayon::prelude::*;

use crate::combinatorics::{binomial, Combinations};
use crate::optcore::{LsqWork, SolveStatus, Status};

use super::{solve_restricted, Candidate, MachineError, MachineProblem, SolveResult, SolverKind, TraceEntry};

const CHUNK: usize = 8192;

/// Exhaustive gauge_p machine: solves the capped problem on every p-subset
/// of atoms and keeps the best (lowest objective, then lexicographically
/// smallest support).
pub fn solve_oracle(prob: &MachineProblem, budget: u64) -> Result<SolveResult, MachineError> {
    let n = prob.n_atoms();
    let p = prob.p();
    let required = binomial(n, p);
    if required > budget {
        return Err(MachineError::BudgetExceeded { required, budget });
    }
    let work = LsqWork::new(prob.sensing(), prob.y());
    let mut best = Candidate::zero(prob);
    let mut lower_bound = f64::INFINITY;
    let mut worst_kkt: f64 = 0.0;
    let mut all_optimal = true;
    let mut subsets = Combinations::new(n, p);
    loop {
        let chunk: Vec<Vec<usize>> = subsets.by_ref().take(CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        let solved: Vec<Candidate> = chunk.par_iter().map(|s| solve_restricted(prob, &work, s)).collect();
        for cand in solved {
            lower_bound = lower_bound.min(cand.bound);
            worst_kkt = worst_kkt.max(cand.status.kkt_residual);
            all_optimal &= cand.status.is_optimal();
            if cand.better_than(&best) {
                best = cand;
            }
        }
    }
    let status = SolveStatus::new(
        if all_optimal { Status::Optimal } else { Status::IterLimit },
        required as usize,
        worst_kkt,
    );
    let trace = vec![TraceEntry {
        iteration: required as usize,
        support: best.support.clone(),
        primal: best.objective,
        bound: lower_bound,
    }];
    Ok(best.into_result(SolverKind::Oracle, status, lower_bound, trace))
}
