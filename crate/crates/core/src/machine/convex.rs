use crate::optcore::{apg_simplex_cap, capped_lsq, ApgOptions, LsqOptions, LsqWork, SolveStatus, Status};

use super::{Candidate, MachineError, MachineProblem, SolveResult, SolverKind, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexOptions {
    pub apg: ApgOptions,
    /// Finish with an active-set solve on the gradient iterate's support.
    pub polish: bool,
}

impl Default for ConvexOptions {
    fn default() -> Self {
        ConvexOptions { apg: ApgOptions::default(), polish: true }
    }
}

/// The convex machine: `min ||L(A) c - y||^2` over `{c >= 0, sum(c) <= psi}`,
/// ignoring `p`.
pub fn solve_convex(prob: &MachineProblem) -> Result<SolveResult, MachineError> {
    solve_convex_with(prob, &ConvexOptions::default())
}

pub fn solve_convex_with(prob: &MachineProblem, opts: &ConvexOptions) -> Result<SolveResult, MachineError> {
    let b = prob.sensing();
    let y = prob.y();
    let apg = apg_simplex_cap(b, y, prob.psi(), &opts.apg);
    let mut trace = vec![TraceEntry {
        iteration: apg.status.iterations,
        support: (0..apg.c.len()).filter(|&i| apg.c[i] > 0.0).collect(),
        primal: apg.objective,
        bound: super::frank_wolfe_bound(prob, &apg.c, None),
    }];
    let mut best = Candidate::from_lsq(
        prob,
        &crate::optcore::LsqResult {
            c: apg.c.clone(),
            objective: apg.objective,
            residual: apg.objective,
            mu: Vec::new(),
            cap_multiplier: 0.0,
            status: apg.status,
        },
        None,
    );
    let mut status = apg.status;
    if opts.polish {
        let work = LsqWork::new(b, y);
        let warm = trace[0].support.clone();
        let r = capped_lsq(&work, prob.psi(), None, &warm, &LsqOptions::default());
        let polished = Candidate::from_lsq(prob, &r, None);
        trace.push(TraceEntry {
            iteration: r.status.iterations,
            support: polished.support.clone(),
            primal: polished.objective,
            bound: polished.bound,
        });
        if r.status.is_optimal() && polished.objective <= best.objective + 1e-12 * (1.0 + best.objective) {
            status = SolveStatus::new(Status::Optimal, apg.status.iterations + r.status.iterations, r.status.kkt_residual);
            best = polished;
        }
    }
    let bound = best.bound;
    Ok(best.into_result(SolverKind::Convex, status, bound, trace))
}

/// Basis-pursuit form of the convex machine: `min sum(c)` subject to
/// `c >= 0` and `||L(A) c - y|| <= eta`, by bisection on the budget.
pub fn solve_basis_pursuit(prob: &MachineProblem, eta: f64) -> Result<SolveResult, MachineError> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(MachineError::Invalid(format!("eta must be finite and nonnegative, got {eta}")));
    }
    let work = LsqWork::new(prob.sensing(), prob.y());
    let target = eta * eta + 1e-20 * (1.0 + prob.y().norm_squared());
    let opts = LsqOptions::default();
    let solve = |psi: f64| capped_lsq(&work, psi, None, &[], &opts);
    let mut trace = Vec::new();
    if prob.y().norm_squared() <= target {
        let zero = Candidate::zero(prob);
        let status = SolveStatus::new(Status::Optimal, 0, 0.0);
        return Ok(zero.into_result(SolverKind::Convex, status, 0.0, trace));
    }
    let unconstrained = solve(f64::MAX);
    if unconstrained.residual > target {
        return Err(MachineError::Infeasible { eta, best: unconstrained.residual.sqrt() });
    }
    let mut lo = 0.0;
    let mut hi: f64 = unconstrained.c.iter().sum();
    let mut best = unconstrained;
    let mut iterations = 0;
    while hi - lo > 1e-12 * (1.0 + hi) && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let r = solve(mid);
        trace.push(TraceEntry { iteration: iterations, support: r.support(), primal: r.residual, bound: mid });
        if r.residual <= target {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    let cand = Candidate::from_lsq(prob, &best, None);
    let status = SolveStatus::new(Status::Optimal, iterations, hi - lo);
    let objective = cand.objective;
    Ok(cand.into_result(SolverKind::Convex, status, objective, trace))
}
