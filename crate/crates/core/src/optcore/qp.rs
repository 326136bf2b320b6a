use nalgebra::{DMatrix, DVector};

use super::{
    lp_solve_with, Constraints, Duals, LpOptions, LpProblem, OptError, SolveStatus, Status, PSD_TOL, SYMMETRY_TOL,
};

/// `min 1/2 x'Qx + q'x` subject to the constraint blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q_mat: DMatrix<f64>,
    pub q: Vec<f64>,
    pub cons: Constraints,
}

impl QpProblem {
    /// Over `x >= 0` with no rows yet.
    pub fn new(q_mat: DMatrix<f64>, q: Vec<f64>) -> Self {
        let n = q.len();
        QpProblem { q_mat, q, cons: Constraints::nonnegative(n) }
    }

    pub fn with_eq(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.cons.a_eq = a;
        self.cons.b_eq = b;
        self
    }

    pub fn with_ineq(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.cons.a_in = a;
        self.cons.b_in = b;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.cons.lower = lower;
        self.cons.upper = upper;
        self
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.q_mat * &xv)) + self.q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.q_mat * DVector::from_column_slice(x);
        g.iter().zip(&self.q).map(|(a, b)| a + b).collect()
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let n = self.n();
        if self.q_mat.nrows() != n || self.q_mat.ncols() != n {
            return Err(OptError::DimensionMismatch { what: "quadratic term", expected: n, got: self.q_mat.nrows() });
        }
        if self.q_mat.iter().chain(&self.q).any(|v| !v.is_finite()) {
            return Err(OptError::NonFinite("objective"));
        }
        self.cons.validate()?;
        let asym = (&self.q_mat - self.q_mat.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(OptError::NotSymmetric(asym));
        }
        if n > 0 {
            let sym = (&self.q_mat + self.q_mat.transpose()) * 0.5;
            let min_eig = sym.symmetric_eigen().eigenvalues.min();
            if min_eig < -PSD_TOL {
                return Err(OptError::NotPsd(min_eig));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { tol: super::DEFAULT_TOL, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub duals: Duals,
}

pub fn qp_solve(p: &QpProblem, tol: f64) -> Result<QpSolution, OptError> {
    qp_solve_with(p, &QpOptions { tol, ..Default::default() })
}

/// Inequality rows `g'x <= h`, with their origin for dual recovery.
enum RowKind {
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

/// Orthonormal basis of the null space of `a` (rows are constraints).
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let gram = a.tr_mul(a);
    let eig = gram.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1e-300);
    let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] <= 1e-12 * scale).collect();
    DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

fn rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1e-300)).count()
}

pub fn qp_solve_with(p: &QpProblem, opts: &QpOptions) -> Result<QpSolution, OptError> {
    p.validate()?;
    let n = p.n();
    let cons = &p.cons;
    let tol = opts.tol;

    // a feasible starting vertex
    let start = lp_solve_with(&LpProblem { c: vec![0.0; n], cons: cons.clone() }, &LpOptions::default())?;
    match start.status.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Ok(QpSolution {
                status: SolveStatus::new(Status::Infeasible, start.status.iterations, f64::NAN),
                x: vec![f64::NAN; n],
                objective: f64::INFINITY,
                dual_objective: f64::NAN,
                duals: Duals::default(),
            })
        }
        _ => return Err(OptError::NumericBreakdown("feasibility phase failed".into())),
    }
    let mut x = DVector::from_vec(start.x);

    let mut g_rows: Vec<DVector<f64>> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    let mut kinds: Vec<RowKind> = Vec::new();
    for i in 0..cons.b_in.len() {
        g_rows.push(cons.a_in.row(i).transpose());
        h.push(cons.b_in[i]);
        kinds.push(RowKind::Ineq(i));
    }
    for j in 0..n {
        if cons.lower[j].is_finite() {
            let mut e = DVector::zeros(n);
            e[j] = -1.0;
            g_rows.push(e);
            h.push(-cons.lower[j]);
            kinds.push(RowKind::Lower(j));
        }
        if cons.upper[j].is_finite() {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            g_rows.push(e);
            h.push(cons.upper[j]);
            kinds.push(RowKind::Upper(j));
        }
    }
    let n_eq = cons.b_eq.len();
    let q_mat = (&p.q_mat + p.q_mat.transpose()) * 0.5;
    let qv = DVector::from_column_slice(&p.q);

    let build_aw = |working: &[usize]| -> DMatrix<f64> {
        let mut aw = DMatrix::zeros(n_eq + working.len(), n);
        for i in 0..n_eq {
            aw.row_mut(i).copy_from(&cons.a_eq.row(i));
        }
        for (k, &r) in working.iter().enumerate() {
            aw.row_mut(n_eq + k).copy_from(&g_rows[r].transpose());
        }
        aw
    };

    // initial working set: active rows kept linearly independent
    let mut working: Vec<usize> = Vec::new();
    let mut current_rank = rank(&build_aw(&working));
    for r in 0..g_rows.len() {
        if (g_rows[r].dot(&x) - h[r]).abs() <= 1e-9 * (1.0 + h[r].abs()) {
            working.push(r);
            let rk = rank(&build_aw(&working));
            if rk > current_rank {
                current_rank = rk;
            } else {
                working.pop();
            }
        }
    }

    let mut iterations = 0;
    let mut status = Status::IterLimit;
    let mut lambda = DVector::zeros(0);
    while iterations < opts.max_iter {
        iterations += 1;
        let grad = &q_mat * &x + &qv;
        let aw = build_aw(&working);
        let z = null_space(&aw, n);
        let mut step = DVector::zeros(n);
        let mut unlimited = false;
        if z.ncols() > 0 {
            let hred = z.tr_mul(&q_mat) * &z;
            let rred = z.tr_mul(&grad);
            let eig = hred.symmetric_eigen();
            let scale = eig.eigenvalues.amax().max(1.0);
            let mut u = DVector::zeros(z.ncols());
            let mut flat = DVector::zeros(z.ncols());
            for k in 0..z.ncols() {
                let v = eig.eigenvectors.column(k);
                let coef = v.dot(&rred);
                if eig.eigenvalues[k] > 1e-12 * scale {
                    u -= v * (coef / eig.eigenvalues[k]);
                } else {
                    flat += v * coef;
                }
            }
            if flat.norm() > tol * (1.0 + grad.norm()) {
                step = -(&z * flat);
                unlimited = true;
            } else {
                step = &z * u;
            }
        }
        if step.norm() <= 1e-12 * (1.0 + x.norm()) {
            // multipliers from A_W' lambda = -grad
            if aw.nrows() == 0 {
                lambda = DVector::zeros(0);
                status = Status::Optimal;
                break;
            }
            let svd = aw.transpose().svd(true, true);
            lambda = svd
                .solve(&(-&grad), 1e-12)
                .map_err(|e| OptError::NumericBreakdown(format!("multiplier solve: {e}")))?;
            let mut worst = None;
            let mut worst_val = -tol;
            for k in 0..working.len() {
                if lambda[n_eq + k] < worst_val {
                    worst_val = lambda[n_eq + k];
                    worst = Some(k);
                }
            }
            match worst {
                None => {
                    status = Status::Optimal;
                    break;
                }
                Some(k) => {
                    working.remove(k);
                    continue;
                }
            }
        }
        let mut alpha = if unlimited { f64::INFINITY } else { 1.0 };
        let mut blocking = None;
        for r in 0..g_rows.len() {
            if working.contains(&r) {
                continue;
            }
            let gp = g_rows[r].dot(&step);
            if gp > 1e-12 * step.norm() {
                let a = ((h[r] - g_rows[r].dot(&x)) / gp).max(0.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some(r);
                }
            }
        }
        if alpha.is_infinite() {
            status = Status::Unbounded;
            break;
        }
        x += &step * alpha;
        if let Some(r) = blocking {
            working.push(r);
        }
    }

    let xs: Vec<f64> = x.iter().copied().collect();
    let objective = p.objective(&xs);
    if status != Status::Optimal {
        let objective = if status == Status::Unbounded { f64::NEG_INFINITY } else { objective };
        return Ok(QpSolution {
            status: SolveStatus::new(status, iterations, f64::NAN),
            x: xs,
            objective,
            dual_objective: f64::NAN,
            duals: Duals::default(),
        });
    }
    let mut duals = Duals {
        eq: (0..n_eq).map(|i| lambda.get(i).copied().unwrap_or(0.0)).collect(),
        ineq: vec![0.0; cons.b_in.len()],
        lower: vec![0.0; n],
        upper: vec![0.0; n],
    };
    for (k, &r) in working.iter().enumerate() {
        let v = lambda[n_eq + k].max(0.0);
        match kinds[r] {
            RowKind::Ineq(i) => duals.ineq[i] = v,
            RowKind::Lower(j) => duals.lower[j] = v,
            RowKind::Upper(j) => duals.upper[j] = v,
        }
    }
    let grad = p.gradient(&xs);
    let kkt = cons.kkt_residual(&xs, &grad, &duals);
    let dual_objective = objective + cons.lagrangian_terms(&xs, &duals);
    Ok(QpSolution { status: SolveStatus::new(Status::Optimal, iterations, kkt), x: xs, objective, dual_objective, duals })
}
