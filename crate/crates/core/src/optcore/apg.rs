use nalgebra::{DMatrix, DVector};

use super::{project_simplex_cap, SolveStatus, Status};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApgOptions {
    pub max_iter: usize,
    /// Stop when the projected-gradient step is below this (relative).
    pub tol: f64,
}

impl Default for ApgOptions {
    fn default() -> Self {
        ApgOptions { max_iter: 20_000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApgResult {
    pub c: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
}

/// Accelerated projected gradient (FISTA with adaptive restart) for
/// `min ||B c - y||^2` over `{c >= 0, sum(c) <= psi}`.
pub fn apg_simplex_cap(b: &DMatrix<f64>, y: &DVector<f64>, psi: f64, opts: &ApgOptions) -> ApgResult {
    let n = b.ncols();
    let gram = b.tr_mul(b);
    let bty = b.tr_mul(y);
    let lipschitz = 2.0 * gram.clone().symmetric_eigen().eigenvalues.amax().max(1e-300);
    let step = 1.0 / lipschitz;
    let grad = |c: &DVector<f64>| (&gram * c - &bty) * 2.0;
    let objective = |c: &DVector<f64>| (b * c - y).norm_squared();

    let mut x = DVector::zeros(n);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut status = Status::IterLimit;
    let mut iterations = 0;
    let mut last_gap = f64::INFINITY;
    for k in 0..opts.max_iter {
        iterations = k + 1;
        let g = grad(&z);
        let trial: Vec<f64> = (&z - &g * step).iter().copied().collect();
        let x_next = DVector::from_vec(project_simplex_cap(&trial, psi));
        // restart when momentum points uphill
        let uphill = (&z - &x_next).dot(&(&x_next - &x)) > 0.0;
        let t_next = if uphill { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        let moved = (&x_next - &z).norm();
        z = if uphill { x_next.clone() } else { &x_next + (&x_next - &x) * ((t - 1.0) / t_next) };
        x = x_next;
        t = t_next;
        last_gap = moved / step;
        if moved <= opts.tol * (1.0 + x.norm()) {
            status = Status::Optimal;
            break;
        }
    }
    let obj = objective(&x);
    ApgResult { c: x.iter().copied().collect(), objective: obj, status: SolveStatus::new(status, iterations, last_gap) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optcore::{capped_lsq, LsqOptions, LsqWork};
    use crate::rng::{seeded, standard_normals};

    #[test]
    fn agrees_with_active_set() {
        let mut rng = seeded(2);
        for trial in 0..10 {
            let b = DMatrix::from_vec(5, 7, standard_normals(&mut rng, 35));
            let y = DVector::from_vec(standard_normals(&mut rng, 5));
            let psi = 0.3 + trial as f64 * 0.2;
            let apg = apg_simplex_cap(&b, &y, psi, &ApgOptions::default());
            let exact = capped_lsq(&LsqWork::new(&b, &y), psi, None, &[], &LsqOptions::default());
            assert!((apg.objective - exact.objective).abs() < 1e-7, "{} vs {}", apg.objective, exact.objective);
        }
    }

    #[test]
    fn zero_budget() {
        let b = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let r = apg_simplex_cap(&b, &y, 0.0, &ApgOptions::default());
        assert_eq!(r.c, vec![0.0, 0.0]);
        assert!((r.objective - 5.0).abs() < 1e-15);
    }
}
