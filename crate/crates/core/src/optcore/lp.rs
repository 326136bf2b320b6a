use nalgebra::{DMatrix, DVector};

use super::{Constraints, Duals, OptError, SolveStatus, Status, DEFAULT_MAX_PIVOTS};

/// `min c'x` subject to the constraint blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub cons: Constraints,
}

impl LpProblem {
    /// `min c'x` over `x >= 0` with no rows yet.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        LpProblem { c, cons: Constraints::nonnegative(n) }
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
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub tol: f64,
    pub max_pivots: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { tol: 1e-9, max_pivots: DEFAULT_MAX_PIVOTS, bland_after: 50, refactor_every: 64 }
    }
}

/// Infeasibility certificate: multipliers with
/// `A_eq'eq + A_in'ineq + upper - lower = 0` and
/// `b_eq'eq + b_in'ineq + u'upper - l'lower < 0`, `ineq, lower, upper >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Farkas {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Farkas {
    /// Returns (combination residual, combined right-hand side, sign violation).
    pub fn check(&self, cons: &Constraints) -> (f64, f64, f64) {
        let n = cons.n();
        let mut comb = vec![0.0; n];
        let mut rhs = 0.0;
        for (i, y) in self.eq.iter().enumerate() {
            for (j, cj) in comb.iter_mut().enumerate() {
                *cj += cons.a_eq[(i, j)] * y;
            }
            rhs += y * cons.b_eq[i];
        }
        for (i, y) in self.ineq.iter().enumerate() {
            for (j, cj) in comb.iter_mut().enumerate() {
                *cj += cons.a_in[(i, j)] * y;
            }
            rhs += y * cons.b_in[i];
        }
        for j in 0..n {
            comb[j] += self.upper[j] - self.lower[j];
            if self.upper[j] != 0.0 {
                rhs += self.upper[j] * cons.upper[j];
            }
            if self.lower[j] != 0.0 {
                rhs -= self.lower[j] * cons.lower[j];
            }
        }
        let residual = comb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sign = self
            .ineq
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, &v| m.max(-v));
        (residual, rhs, sign)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub duals: Duals,
    pub farkas: Option<Farkas>,
}

pub fn lp_solve(p: &LpProblem, tol: f64) -> Result<LpSolution, OptError> {
    lp_solve_with(p, &LpOptions { tol, ..Default::default() })
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = l + z, with an upper-bound row when u is finite.
    Shift { col: usize, bound_row: Option<usize> },
    /// x = u - z.
    Neg { col: usize },
    /// x = z+ - z-.
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    cost: Vec<f64>,
    sign: Vec<f64>,
    vars: Vec<VarMap>,
    offset: Vec<f64>,
    slack_of_row: Vec<Option<usize>>,
    n_eq: usize,
    n_in: usize,
}

fn standard_form(p: &LpProblem) -> StandardForm {
    let cons = &p.cons;
    let n = p.n();
    let n_eq = cons.b_eq.len();
    let n_in = cons.b_in.len();
    let mut vars = Vec::with_capacity(n);
    let mut offset = vec![0.0; n];
    let mut n_cols = 0;
    let mut n_bound_rows = 0;
    for j in 0..n {
        let (l, u) = (cons.lower[j], cons.upper[j]);
        if l.is_finite() {
            offset[j] = l;
            let bound_row = if u.is_finite() {
                n_bound_rows += 1;
                Some(n_eq + n_in + n_bound_rows - 1)
            } else {
                None
            };
            vars.push(VarMap::Shift { col: n_cols, bound_row });
            n_cols += 1;
        } else if u.is_finite() {
            offset[j] = u;
            vars.push(VarMap::Neg { col: n_cols });
            n_cols += 1;
        } else {
            vars.push(VarMap::Split { pos: n_cols, neg: n_cols + 1 });
            n_cols += 2;
        }
    }
    let m = n_eq + n_in + n_bound_rows;
    let n_struct = n_cols;
    let total = n_struct + n_in + n_bound_rows;
    let mut a = DMatrix::zeros(m, total);
    let mut b = DVector::zeros(m);
    let mut cost = vec![0.0; total];
    let mut slack_of_row = vec![None; m];

    let row_source = |i: usize| -> (Vec<f64>, f64) {
        if i < n_eq {
            (cons.a_eq.row(i).iter().copied().collect(), cons.b_eq[i])
        } else {
            (cons.a_in.row(i - n_eq).iter().copied().collect(), cons.b_in[i - n_eq])
        }
    };
    for i in 0..n_eq + n_in {
        let (row, rhs) = row_source(i);
        let mut shifted = rhs;
        for j in 0..n {
            let aij = row[j];
            if aij == 0.0 {
                continue;
            }
            shifted -= aij * offset[j];
            match vars[j] {
                VarMap::Shift { col, .. } => a[(i, col)] = aij,
                VarMap::Neg { col } => a[(i, col)] = -aij,
                VarMap::Split { pos, neg } => {
                    a[(i, pos)] = aij;
                    a[(i, neg)] = -aij;
                }
            }
        }
        b[i] = shifted;
        if i >= n_eq {
            let s = n_struct + (i - n_eq);
            a[(i, s)] = 1.0;
            slack_of_row[i] = Some(s);
        }
    }
    let mut next_slack = n_struct + n_in;
    for j in 0..n {
        match vars[j] {
            VarMap::Shift { col, bound_row } => {
                cost[col] = p.c[j];
                if let Some(r) = bound_row {
                    a[(r, col)] = 1.0;
                    a[(r, next_slack)] = 1.0;
                    b[r] = cons.upper[j] - cons.lower[j];
                    slack_of_row[r] = Some(next_slack);
                    next_slack += 1;
                }
            }
            VarMap::Neg { col } => cost[col] = -p.c[j],
            VarMap::Split { pos, neg } => {
                cost[pos] = p.c[j];
                cost[neg] = -p.c[j];
            }
        }
    }
    let mut sign = vec![1.0; m];
    for i in 0..m {
        if b[i] < 0.0 {
            sign[i] = -1.0;
            b[i] = -b[i];
            for v in a.row_mut(i).iter_mut() {
                *v = -*v;
            }
        }
    }
    StandardForm { a, b, cost, sign, vars, offset, slack_of_row, n_eq, n_in }
}

enum Outcome {
    Optimal,
    Unbounded,
    IterLimit,
}

struct Simplex<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    pivots_since_refactor: usize,
    opts: LpOptions,
}

impl<'a> Simplex<'a> {
    fn new(a: &'a DMatrix<f64>, b: &'a DVector<f64>, basis: Vec<usize>, opts: LpOptions) -> Result<Self, OptError> {
        let mut is_basic = vec![false; a.ncols()];
        for &j in &basis {
            is_basic[j] = true;
        }
        let m = a.nrows();
        let mut s = Simplex {
            a,
            b,
            basis,
            is_basic,
            binv: DMatrix::identity(m, m),
            xb: b.clone(),
            pivots_since_refactor: 0,
            opts,
        };
        s.refactor()?;
        Ok(s)
    }

    fn refactor(&mut self) -> Result<(), OptError> {
        let m = self.a.nrows();
        if m == 0 {
            return Ok(());
        }
        let bmat = DMatrix::from_fn(m, m, |r, c| self.a[(r, self.basis[c])]);
        self.binv = bmat
            .try_inverse()
            .ok_or_else(|| OptError::NumericBreakdown("singular simplex basis".into()))?;
        self.xb = &self.binv * self.b;
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> DVector<f64> {
        let cb = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| cost[j]));
        self.binv.tr_mul(&cb)
    }

    fn pivot(&mut self, r: usize, q: usize, w: &DVector<f64>) -> Result<(), OptError> {
        let m = self.a.nrows();
        let theta = self.xb[r] / w[r];
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * w[i];
            }
        }
        self.xb[r] = theta;
        let pivot_row: Vec<f64> = self.binv.row(r).iter().map(|v| v / w[r]).collect();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = w[i];
            if f != 0.0 {
                for (k, pr) in pivot_row.iter().enumerate() {
                    self.binv[(i, k)] -= f * pr;
                }
            }
        }
        for (k, pr) in pivot_row.into_iter().enumerate() {
            self.binv[(r, k)] = pr;
        }
        self.is_basic[self.basis[r]] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    fn run(&mut self, cost: &[f64], eligible: &[bool], pivots: &mut usize) -> Result<Outcome, OptError> {
        let tol = self.opts.tol;
        let opt_tol = tol * (1.0 + cost.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let mut degenerate_streak = 0;
        loop {
            if *pivots >= self.opts.max_pivots {
                return Ok(Outcome::IterLimit);
            }
            let y = self.duals(cost);
            let reduced = self.a.tr_mul(&y);
            let bland = degenerate_streak >= self.opts.bland_after;
            let mut entering = None;
            let mut best = -opt_tol;
            for j in 0..self.a.ncols() {
                if self.is_basic[j] || !eligible[j] {
                    continue;
                }
                let d = cost[j] - reduced[j];
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(Outcome::Optimal);
            };
            let w = &self.binv * self.a.column(q);
            let piv_tol = 1e-9 * (1.0 + w.amax());
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..w.len() {
                if w[i] <= piv_tol {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / w[i];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        if ratio < best_ratio - 1e-12 {
                            true
                        } else if ratio <= best_ratio + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[l]
                            } else {
                                w[i] > w[l]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    best_ratio = best_ratio.min(ratio);
                }
            }
            let Some(r) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if best_ratio <= 1e-12 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.pivot(r, q, &w)?;
            *pivots += 1;
        }
    }
}

pub fn lp_solve_with(p: &LpProblem, opts: &LpOptions) -> Result<LpSolution, OptError> {
    let cons = &p.cons;
    if p.c.len() != cons.n() {
        return Err(OptError::DimensionMismatch { what: "objective", expected: cons.n(), got: p.c.len() });
    }
    if p.c.iter().any(|v| !v.is_finite()) {
        return Err(OptError::NonFinite("objective"));
    }
    cons.validate()?;
    let n = p.n();
    if let Some(j) = (0..n).find(|&j| cons.lower[j] > cons.upper[j]) {
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        lower[j] = 1.0;
        upper[j] = 1.0;
        let farkas = Farkas { eq: vec![0.0; cons.b_eq.len()], ineq: vec![0.0; cons.b_in.len()], lower, upper };
        return Ok(infeasible(p, 0, farkas));
    }

    let sf = standard_form(p);
    let m = sf.a.nrows();
    let n_std = sf.a.ncols();

    // initial basis: slacks with positive orientation, artificials elsewhere
    let mut art_rows = Vec::new();
    let mut basis = vec![usize::MAX; m];
    for i in 0..m {
        match sf.slack_of_row[i] {
            Some(s) if sf.sign[i] > 0.0 => basis[i] = s,
            _ => art_rows.push(i),
        }
    }
    let n_art = art_rows.len();
    let total = n_std + n_art;
    let mut a = sf.a.clone().resize_horizontally(total, 0.0);
    for (k, &i) in art_rows.iter().enumerate() {
        a[(i, n_std + k)] = 1.0;
        basis[i] = n_std + k;
    }
    let mut pivots = 0;
    let mut simplex = Simplex::new(&a, &sf.b, basis, *opts)?;

    let feas_tol = opts.tol * (1.0 + sf.b.amax());
    if n_art > 0 {
        let mut cost1 = vec![0.0; total];
        for c in cost1.iter_mut().skip(n_std) {
            *c = 1.0;
        }
        let eligible = vec![true; total];
        match simplex.run(&cost1, &eligible, &mut pivots)? {
            Outcome::IterLimit => return Ok(iter_limit(p, pivots)),
            Outcome::Unbounded => {
                return Err(OptError::NumericBreakdown("phase one reported unbounded".into()));
            }
            Outcome::Optimal => {}
        }
        simplex.refactor()?;
        let infeas: f64 = (0..m).filter(|&i| simplex.basis[i] >= n_std).map(|i| simplex.xb[i].max(0.0)).sum();
        if infeas > feas_tol {
            let ys = simplex.duals(&cost1);
            return Ok(infeasible(p, pivots, farkas_from(&sf, &ys, n)));
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..m {
            if simplex.basis[r] < n_std {
                continue;
            }
            let row = simplex.binv.row(r) * &a;
            let mut pick = None;
            let mut best = 1e-9;
            for j in 0..n_std {
                if !simplex.is_basic[j] && row[j].abs() > best {
                    best = row[j].abs();
                    pick = Some(j);
                }
            }
            if let Some(q) = pick {
                let w = &simplex.binv * a.column(q);
                simplex.pivot(r, q, &w)?;
                pivots += 1;
            }
        }
        simplex.refactor()?;
    }

    let mut cost2 = sf.cost.clone();
    cost2.resize(total, 0.0);
    let mut eligible = vec![true; total];
    for e in eligible.iter_mut().skip(n_std) {
        *e = false;
    }
    let outcome = simplex.run(&cost2, &eligible, &mut pivots)?;
    simplex.refactor()?;
    let mut z = vec![0.0; total];
    for (i, &j) in simplex.basis.iter().enumerate() {
        z[j] = simplex.xb[i].max(0.0);
    }
    let x = recover_x(&sf, &z, n);
    let objective = p.objective(&x);
    match outcome {
        Outcome::IterLimit => return Ok(iter_limit(p, pivots)),
        Outcome::Unbounded => {
            return Ok(LpSolution {
                status: SolveStatus::new(Status::Unbounded, pivots, f64::NAN),
                x,
                objective: f64::NEG_INFINITY,
                dual_objective: f64::NAN,
                duals: Duals::default(),
                farkas: None,
            })
        }
        Outcome::Optimal => {}
    }
    let ys = simplex.duals(&cost2);
    let duals = map_duals(p, &sf, &ys);
    let kkt = cons.kkt_residual(&x, &p.c, &duals);
    let dual_objective = objective + cons.lagrangian_terms(&x, &duals);
    Ok(LpSolution {
        status: SolveStatus::new(Status::Optimal, pivots, kkt),
        x,
        objective,
        dual_objective,
        duals,
        farkas: None,
    })
}

fn recover_x(sf: &StandardForm, z: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| match sf.vars[j] {
            VarMap::Shift { col, .. } => sf.offset[j] + z[col],
            VarMap::Neg { col } => sf.offset[j] - z[col],
            VarMap::Split { pos, neg } => z[pos] - z[neg],
        })
        .collect()
}

/// Row multipliers in the module convention from standard-form duals.
fn row_multipliers(sf: &StandardForm, ys: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let eq = (0..sf.n_eq).map(|i| -sf.sign[i] * ys[i]).collect();
    let ineq = (sf.n_eq..sf.n_eq + sf.n_in).map(|i| -sf.sign[i] * ys[i]).collect();
    (eq, ineq)
}

fn map_duals(p: &LpProblem, sf: &StandardForm, ys: &DVector<f64>) -> Duals {
    let cons = &p.cons;
    let n = p.n();
    let (eq, ineq) = row_multipliers(sf, ys);
    // r = c + A_eq' y_eq + A_in' y_in must equal lower - upper
    let mut r = p.c.clone();
    for (i, y) in eq.iter().enumerate() {
        for (j, rj) in r.iter_mut().enumerate() {
            *rj += cons.a_eq[(i, j)] * y;
        }
    }
    for (i, y) in ineq.iter().enumerate() {
        for (j, rj) in r.iter_mut().enumerate() {
            *rj += cons.a_in[(i, j)] * y;
        }
    }
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for j in 0..n {
        match sf.vars[j] {
            VarMap::Shift { bound_row, .. } => {
                let zu = bound_row.map_or(0.0, |row| -sf.sign[row] * ys[row]);
                upper[j] = zu;
                lower[j] = r[j] + zu;
            }
            VarMap::Neg { .. } => upper[j] = -r[j],
            VarMap::Split { .. } => {}
        }
    }
    Duals { eq, ineq, lower, upper }
}

fn farkas_from(sf: &StandardForm, ys: &DVector<f64>, n: usize) -> Farkas {
    let (eq, ineq) = row_multipliers(sf, ys);
    let aty = sf.a.tr_mul(ys);
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for j in 0..n {
        match sf.vars[j] {
            VarMap::Shift { col, bound_row } => {
                let zu = bound_row.map_or(0.0, |row| -sf.sign[row] * ys[row]);
                upper[j] = zu;
                lower[j] = -aty[col];
            }
            VarMap::Neg { col } => upper[j] = -aty[col],
            VarMap::Split { .. } => {}
        }
    }
    Farkas { eq, ineq, lower, upper }
}

fn infeasible(p: &LpProblem, pivots: usize, farkas: Farkas) -> LpSolution {
    LpSolution {
        status: SolveStatus::new(Status::Infeasible, pivots, f64::NAN),
        x: vec![f64::NAN; p.n()],
        objective: f64::INFINITY,
        dual_objective: f64::NAN,
        duals: Duals::default(),
        farkas: Some(farkas),
    }
}

fn iter_limit(p: &LpProblem, pivots: usize) -> LpSolution {
    LpSolution {
        status: SolveStatus::new(Status::IterLimit, pivots, f64::NAN),
        x: vec![f64::NAN; p.n()],
        objective: f64::NAN,
        dual_objective: f64::NAN,
        duals: Duals::default(),
        farkas: None,
    }
}
