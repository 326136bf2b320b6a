//! Active-set solver for the capped nonnegative least-squares problem
//!
//! ```text
//! min ||B c - y||^2 + ridge ||c||^2   s.t.  c >= 0,  sum(c) <= psi
//! ```
//!
//! in the style of Lawson and Hanson, with the cap handled as an extra
//! constraint that enters and leaves the working set.

use nalgebra::{DMatrix, DVector};

use super::{SolveStatus, Status};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqOptions {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions { ridge: 0.0, tol: 1e-11, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqResult {
    /// Full-length coefficients; entries outside the allowed set are zero.
    pub c: Vec<f64>,
    /// `||B c - y||^2 + ridge ||c||^2`.
    pub objective: f64,
    /// `||B c - y||^2`.
    pub residual: f64,
    /// Multipliers of `-c_i <= 0` (zero for columns not allowed).
    pub mu: Vec<f64>,
    /// Multiplier of `sum(c) <= psi`.
    pub cap_multiplier: f64,
    pub status: SolveStatus,
}

impl LsqResult {
    pub fn support(&self) -> Vec<usize> {
        (0..self.c.len()).filter(|&i| self.c[i] > 0.0).collect()
    }
}

/// Precomputed data shared by many solves on the same matrix.
#[derive(Debug, Clone)]
pub struct LsqWork<'a> {
    pub b: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    bty: DVector<f64>,
}

impl<'a> LsqWork<'a> {
    pub fn new(b: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        LsqWork { b, y, bty: b.tr_mul(y) }
    }

    /// `w = B'(y - B c) - ridge c`, half the negative gradient.
    fn half_neg_gradient(&self, c: &[f64], ridge: f64, active: &[usize]) -> DVector<f64> {
        let mut bc = DVector::zeros(self.b.nrows());
        for &i in active {
            bc.axpy(c[i], &self.b.column(i), 1.0);
        }
        let mut w = &self.bty - self.b.tr_mul(&bc);
        for &i in active {
            w[i] -= ridge * c[i];
        }
        w
    }

    fn residual(&self, c: &[f64], active: &[usize]) -> f64 {
        let mut r = -self.y.clone();
        for &i in active {
            r.axpy(c[i], &self.b.column(i), 1.0);
        }
        r.norm_squared()
    }
}

/// Helmert basis: orthonormal columns spanning `{v : sum(v) = 0}` in R^k.
fn sum_zero_basis(k: usize) -> DMatrix<f64> {
    let mut n = DMatrix::zeros(k, k - 1);
    for j in 1..k {
        let s = 1.0 / ((j * (j + 1)) as f64).sqrt();
        for r in 0..j {
            n[(r, j - 1)] = s;
        }
        n[(j, j - 1)] = -(j as f64) * s;
    }
    n
}

fn min_norm_lsq(m: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let svd = m.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    svd.solve(rhs, eps.max(1e-300)).expect("both factors computed")
}

/// Minimizer over coefficients supported on `set`, with `sum = psi` if `cap`.
fn subproblem(work: &LsqWork, set: &[usize], cap: bool, psi: f64, ridge: f64) -> Vec<f64> {
    let k = set.len();
    let m = work.b.nrows();
    let sr = ridge.sqrt();
    let bp = DMatrix::from_fn(m, k, |r, c| work.b[(r, set[c])]);
    if !cap {
        if ridge == 0.0 {
            return min_norm_lsq(bp, work.y).iter().copied().collect();
        }
        let mut mat = DMatrix::zeros(m + k, k);
        mat.view_mut((0, 0), (m, k)).copy_from(&bp);
        for i in 0..k {
            mat[(m + i, i)] = sr;
        }
        let mut rhs = DVector::zeros(m + k);
        rhs.rows_mut(0, m).copy_from(work.y);
        return min_norm_lsq(mat, &rhs).iter().copied().collect();
    }
    if k == 1 {
        return vec![psi];
    }
    let nb = sum_zero_basis(k);
    let z0 = DVector::from_element(k, psi / k as f64);
    let bn = &bp * &nb;
    let mut mat = DMatrix::zeros(m + k, k - 1);
    mat.view_mut((0, 0), (m, k - 1)).copy_from(&bn);
    if ridge > 0.0 {
        mat.view_mut((m, 0), (k, k - 1)).copy_from(&(&nb * sr));
    }
    let mut rhs = DVector::zeros(m + k);
    rhs.rows_mut(0, m).copy_from(&(work.y - &bp * &z0));
    if ridge > 0.0 {
        rhs.rows_mut(m, k).copy_from(&(-&z0 * sr));
    }
    let t = min_norm_lsq(mat, &rhs);
    (z0 + nb * t).iter().copied().collect()
}

/// Solves the capped problem over the columns marked in `allowed` (all if
/// `None`), optionally warm-started from a support guess.
pub fn capped_lsq(
    work: &LsqWork,
    psi: f64,
    allowed: Option<&[bool]>,
    warm: &[usize],
    opts: &LsqOptions,
) -> LsqResult {
    let n = work.b.ncols();
    let ridge = opts.ridge;
    let is_allowed = |i: usize| allowed.is_none_or(|a| a[i]);
    let allowed_idx: Vec<usize> = (0..n).filter(|&i| is_allowed(i)).collect();
    let mut c = vec![0.0; n];
    let mut set: Vec<usize> = Vec::new();
    let mut cap = false;
    let scale = 1.0 + work.bty.amax();
    let tol = opts.tol * scale;

    if psi > 0.0 && !warm.is_empty() {
        let mut start: Vec<usize> = warm.iter().copied().filter(|&i| i < n && is_allowed(i)).collect();
        start.sort_unstable();
        start.dedup();
        if !start.is_empty() {
            let z = subproblem(work, &start, false, psi, ridge);
            let proj = super::project_simplex_cap(&z, psi);
            for (k, &i) in start.iter().enumerate() {
                if proj[k] > 0.0 {
                    c[i] = proj[k];
                    set.push(i);
                }
            }
            cap = proj.iter().sum::<f64>() >= psi * (1.0 - 1e-14);
            if cap && set.len() > 0 {
                renormalize(&mut c, &set, psi);
            }
        }
    }

    let mut iterations = 0;
    let mut status = Status::Optimal;
    let mut blocked: Vec<usize> = Vec::new();
    let mut warm_pending = !set.is_empty();
    if psi > 0.0 {
        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                status = Status::IterLimit;
                break;
            }
            let w = work.half_neg_gradient(&c, ridge, &set);
            let eta = if cap && !set.is_empty() { set.iter().map(|&i| w[i]).sum::<f64>() / set.len() as f64 } else { 0.0 };
            let mut entering = None;
            if warm_pending {
                // settle the warm-start support before pricing
                warm_pending = false;
            } else if cap && eta < -tol {
                cap = false;
            } else {
                let mut best = tol;
                for &i in &allowed_idx {
                    if set.contains(&i) || blocked.contains(&i) {
                        continue;
                    }
                    if w[i] - eta > best {
                        best = w[i] - eta;
                        entering = Some(i);
                    }
                }
                match entering {
                    None => break,
                    Some(t) => {
                        set.push(t);
                        set.sort_unstable();
                    }
                }
            }
            // inner loop: move toward the subproblem minimizer, dropping
            // coefficients that hit zero
            let mut inner = 0;
            loop {
                inner += 1;
                if inner > 4 * n + 10 {
                    break;
                }
                let z = subproblem(work, &set, cap, psi, ridge);
                let sum_z: f64 = z.iter().sum();
                let feasible = z.iter().all(|&v| v > 0.0) && (cap || sum_z <= psi);
                if feasible {
                    for (k, &i) in set.iter().enumerate() {
                        c[i] = z[k];
                    }
                    blocked.clear();
                    break;
                }
                let mut alpha = 1.0;
                let mut limit = None;
                let mut hits_cap = false;
                for (k, &i) in set.iter().enumerate() {
                    if z[k] <= 0.0 {
                        let a = c[i] / (c[i] - z[k]);
                        if a < alpha || limit.is_none() && a <= alpha {
                            alpha = a;
                            limit = Some(i);
                        }
                    }
                }
                if !cap && sum_z > psi {
                    let sum_c: f64 = set.iter().map(|&i| c[i]).sum();
                    let a = ((psi - sum_c) / (sum_z - sum_c)).max(0.0);
                    if a < alpha {
                        alpha = a;
                        limit = None;
                        hits_cap = true;
                    }
                }
                for (k, &i) in set.iter().enumerate() {
                    c[i] += alpha * (z[k] - c[i]);
                }
                if let Some(i) = limit {
                    c[i] = 0.0;
                }
                let zero_tol = 1e-14 * (1.0 + psi);
                let mut removed = Vec::new();
                set.retain(|&i| {
                    let keep = c[i] > zero_tol;
                    if !keep {
                        removed.push(i);
                    }
                    keep
                });
                for &i in &removed {
                    c[i] = 0.0;
                }
                if hits_cap {
                    cap = true;
                }
                if set.is_empty() {
                    cap = false;
                    break;
                }
                if cap {
                    renormalize(&mut c, &set, psi);
                }
                if let Some(t) = entering {
                    if alpha == 0.0 && removed.contains(&t) {
                        blocked.push(t);
                        break;
                    }
                }
            }
        }
    }

    let w = work.half_neg_gradient(&c, ridge, &set);
    let eta = if !cap {
        0.0
    } else if !set.is_empty() {
        set.iter().map(|&i| w[i]).sum::<f64>() / set.len() as f64
    } else {
        allowed_idx.iter().map(|&i| w[i]).fold(0.0f64, f64::max)
    };
    let mut mu = vec![0.0; n];
    let mut kkt: f64 = 0.0;
    for &i in &allowed_idx {
        mu[i] = 2.0 * (eta - w[i]);
        if set.contains(&i) {
            kkt = kkt.max((w[i] - eta).abs());
        } else {
            kkt = kkt.max(w[i] - eta);
        }
    }
    kkt = kkt.max(-eta) / scale;
    let residual = work.residual(&c, &set);
    let objective = residual + ridge * set.iter().map(|&i| c[i] * c[i]).sum::<f64>();
    LsqResult {
        c,
        objective,
        residual,
        mu,
        cap_multiplier: 2.0 * eta,
        status: SolveStatus::new(status, iterations, kkt),
    }
}

fn renormalize(c: &mut [f64], set: &[usize], psi: f64) {
    let s: f64 = set.iter().map(|&i| c[i]).sum();
    if s > 0.0 {
        for &i in set {
            c[i] *= psi / s;
        }
    }
}
