use std::f64::consts::PI;

use rand::Rng;

use super::{distance, norm, Alphabet, AlphabetError, AlphabetFlags, DEDUP_TOL};
use crate::combinatorics::{binomial, unrank};
use crate::rng::{seeded, standard_normals};

/// Default number of samples per two-element support in the group-sparsity
/// alphabet.
pub const GROUP_SPARSITY_RESOLUTION: usize = 181;

/// The signed canonical basis {+e_i} followed by {-e_i}.
pub fn build_canonical(d: usize) -> Result<Alphabet, AlphabetError> {
    if d == 0 {
        return Err(AlphabetError::InvalidDimension(0));
    }
    let mut atoms = Vec::with_capacity(2 * d);
    let mut labels = Vec::with_capacity(2 * d);
    for sign in [1.0, -1.0] {
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = sign;
            atoms.push(e);
            labels.push(format!("{}e{}", if sign > 0.0 { "+" } else { "-" }, i + 1));
        }
    }
    let flags = AlphabetFlags { symmetric_closure: true, unit_norm: true, ..Default::default() };
    Alphabet::new(d, atoms, Some(labels), flags)
}

/// Point of the planar spiral (t cos(pi t), t sin(pi t)).
pub fn spiral_point(t: f64) -> [f64; 2] {
    [t * (PI * t).cos(), t * (PI * t).sin()]
}

/// Spiral atoms on a uniform grid of `n_atoms` points over [0, 2]; the t = 0
/// point is dropped since it is the origin.
pub fn build_spiral(n_atoms: usize) -> Result<Alphabet, AlphabetError> {
    build_spiral_with(n_atoms, &[])
}

/// Like [`build_spiral`], with extra parameter values merged into the grid.
pub fn build_spiral_with(n_atoms: usize, extra: &[f64]) -> Result<Alphabet, AlphabetError> {
    if n_atoms < 2 {
        return Err(AlphabetError::InvalidParameter(format!(
            "spiral needs at least 2 grid points, got {n_atoms}"
        )));
    }
    let mut ts: Vec<f64> = (1..n_atoms).map(|i| 2.0 * i as f64 / (n_atoms - 1) as f64).collect();
    for &t in extra {
        if !(t > 0.0 && t <= 2.0) {
            return Err(AlphabetError::InvalidParameter(format!("spiral parameter {t} outside (0, 2]")));
        }
        if !ts.iter().any(|&s| (s - t).abs() <= 1e-12) {
            ts.push(t);
        }
    }
    ts.sort_by(|a, b| a.total_cmp(b));
    let atoms = ts.iter().map(|&t| spiral_point(t).to_vec()).collect();
    let labels = ts.iter().map(|t| format!("t={t}")).collect();
    Alphabet::new(2, atoms, Some(labels), AlphabetFlags::default())
}

/// Random rank-one atoms vec(u u^T) with ||u||_2 = 1 and ||u||_0 <= k.
///
/// Each atom draws a support uniformly among all nonempty supports of size at
/// most `k`, fills it with Gaussian entries and normalizes. Atoms that repeat
/// an earlier one are redrawn.
pub fn build_sparse_pca(d: usize, k: usize, count: usize, seed: u64) -> Result<Alphabet, AlphabetError> {
    if d == 0 {
        return Err(AlphabetError::InvalidDimension(0));
    }
    if k == 0 || k > d {
        return Err(AlphabetError::InvalidSparsity { d, k });
    }
    if count == 0 {
        return Err(AlphabetError::InvalidParameter("count must be at least 1".into()));
    }
    let per_size: Vec<u64> = (1..=k).map(|s| binomial(d, s)).collect();
    let total: u64 = per_size.iter().sum();
    let mut rng = seeded(seed);
    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(count);
    let max_attempts = 1000 * count;
    let mut attempts = 0;
    while atoms.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(AlphabetError::TooFewDistinct { found: atoms.len(), wanted: count });
        }
        let mut r = rng.random_range(0..total);
        let mut size = 1;
        for (s, &c) in per_size.iter().enumerate() {
            if r < c {
                size = s + 1;
                break;
            }
            r -= c;
        }
        let support = unrank(d, size, r);
        let fill = standard_normals(&mut rng, size);
        let n = norm(&fill);
        if n == 0.0 {
            continue;
        }
        let mut u = vec![0.0; d];
        for (&i, v) in support.iter().zip(&fill) {
            u[i] = v / n;
        }
        let atom: Vec<f64> = (0..d * d).map(|idx| u[idx / d] * u[idx % d]).collect();
        if atoms.iter().any(|a| distance(a, &atom) <= DEDUP_TOL) {
            continue;
        }
        atoms.push(atom);
    }
    let flags = AlphabetFlags { unit_norm: true, ..Default::default() };
    Alphabet::new(d * d, atoms, None, flags)
}

/// Placement of Gaussian-wave centers on the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterGrid {
    /// theta_i = lo + (i - 1)(hi - lo)/(n - 1): both endpoints included.
    Endpoints,
    /// theta_i = lo + (i - 1/2)(hi - lo)/n: cell midpoints.
    Midpoints,
}

/// Parametric alphabet of Gaussian waves t -> exp(-(t - theta)^2 / width^2).
///
/// It has no finite representation by itself; compose it with a point
/// sampler (see [`crate::linops::materialize_sensing`]) or evaluate it on a
/// grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWaves {
    centers: Vec<f64>,
    width: f64,
}

impl GaussianWaves {
    pub fn new(
        n_centers: usize,
        width: f64,
        lo: f64,
        hi: f64,
        grid: CenterGrid,
    ) -> Result<Self, AlphabetError> {
        if n_centers < 2 {
            return Err(AlphabetError::InvalidParameter(format!("need at least 2 centers, got {n_centers}")));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(AlphabetError::InvalidParameter(format!("width must be positive, got {width}")));
        }
        if !(lo < hi) {
            return Err(AlphabetError::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
        }
        let n = n_centers as f64;
        let centers = (0..n_centers)
            .map(|i| match grid {
                CenterGrid::Endpoints => lo + i as f64 * (hi - lo) / (n - 1.0),
                CenterGrid::Midpoints => lo + (i as f64 + 0.5) * (hi - lo) / n,
            })
            .collect();
        Ok(GaussianWaves { centers, width })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn eval_at(theta: f64, width: f64, t: f64) -> f64 {
        let z = (t - theta) / width;
        (-z * z).exp()
    }

    /// Value of the `i`-th wave at `t`.
    pub fn eval(&self, i: usize, t: f64) -> f64 {
        Self::eval_at(self.centers[i], self.width, t)
    }

    /// Finite alphabet obtained by evaluating every wave on `points`.
    pub fn on_grid(&self, points: &[f64]) -> Result<Alphabet, AlphabetError> {
        let atoms = (0..self.len()).map(|i| points.iter().map(|&t| self.eval(i, t)).collect()).collect();
        let labels = self.centers.iter().map(|c| format!("theta={c}")).collect();
        Alphabet::new(points.len(), atoms, Some(labels), AlphabetFlags::default())
    }
}

/// Gaussian waves with centers on a uniform grid over `[grid_lo, grid_hi]`,
/// endpoints included.
pub fn build_gaussian_waves(
    n_centers: usize,
    width: f64,
    grid_lo: f64,
    grid_hi: f64,
) -> Result<GaussianWaves, AlphabetError> {
    GaussianWaves::new(n_centers, width, grid_lo, grid_hi, CenterGrid::Endpoints)
}

/// Group-sparsity alphabet in R^3 with default resolution.
pub fn build_group_sparsity() -> Result<Alphabet, AlphabetError> {
    build_group_sparsity_with(GROUP_SPARSITY_RESOLUTION)
}

/// Discretized group-sparsity alphabet in R^3.
///
/// Supports are {1},{2},{3},{1,2},{2,3}. Atoms are unit vectors with
/// ||u||_inf <= ||u||_0^(-1/3). Single supports give +-e_i; each two-element
/// support is sampled with `resolution` points spread evenly over the four
/// admissible arcs (endpoints included). The atoms (1,1,0)/sqrt(2) and
/// (0,-sqrt(7)/4,3/4) are always present.
pub fn build_group_sparsity_with(resolution: usize) -> Result<Alphabet, AlphabetError> {
    if resolution < 4 {
        return Err(AlphabetError::InvalidParameter(format!(
            "group-sparsity resolution must be at least 4, got {resolution}"
        )));
    }
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let push = |atoms: &mut Vec<Vec<f64>>, labels: &mut Vec<String>, v: Vec<f64>, label: String| {
        if !atoms.iter().any(|a| distance(a, &v) <= DEDUP_TOL) {
            atoms.push(v);
            labels.push(label);
        }
    };
    for sign in [1.0, -1.0] {
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = sign;
            push(&mut atoms, &mut labels, e, format!("{}e{}", if sign > 0.0 { "+" } else { "-" }, i + 1));
        }
    }
    let bound = 2f64.powf(-1.0 / 3.0);
    // |cos| <= bound and |sin| <= bound on [acos(bound), asin(bound)] around pi/4
    let lo = bound.acos();
    let hi = bound.asin();
    let per_arc: Vec<usize> = (0..4).map(|j| resolution / 4 + usize::from(j < resolution % 4)).collect();
    for (a, b) in [(0usize, 1usize), (1, 2)] {
        for (arc, &count) in per_arc.iter().enumerate() {
            let offset = arc as f64 * PI / 2.0;
            for s in 0..count {
                let phi = if count == 1 {
                    offset + 0.5 * (lo + hi)
                } else {
                    offset + lo + (hi - lo) * s as f64 / (count - 1) as f64
                };
                let mut u = vec![0.0; 3];
                u[a] = phi.cos();
                u[b] = phi.sin();
                push(&mut atoms, &mut labels, u, format!("supp{{{},{}}} phi={phi:.6}", a + 1, b + 1));
            }
        }
    }
    let s2 = 2f64.sqrt();
    push(&mut atoms, &mut labels, vec![1.0 / s2, 1.0 / s2, 0.0], "A1#".into());
    push(&mut atoms, &mut labels, vec![0.0, -(7f64.sqrt()) / 4.0, 0.75], "A2#".into());
    let flags = AlphabetFlags { unit_norm: true, ..Default::default() };
    Alphabet::new(3, atoms, Some(labels), flags)
}

/// Closure of `a` under negation, deduplicated within [`DEDUP_TOL`].
pub fn symmetrize(a: &Alphabet) -> Alphabet {
    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(2 * a.len());
    let mut labels: Vec<String> = Vec::with_capacity(2 * a.len());
    let base_labels: Vec<String> = match a.labels() {
        Some(l) => l.to_vec(),
        None => (0..a.len()).map(|i| format!("atom{i}")).collect(),
    };
    let mut push = |v: Vec<f64>, label: String| {
        if !atoms.iter().any(|b| distance(b, &v) <= DEDUP_TOL) {
            atoms.push(v);
            labels.push(label);
        }
    };
    for (atom, label) in a.atoms().iter().zip(&base_labels) {
        push(atom.clone(), label.clone());
    }
    for (atom, label) in a.atoms().iter().zip(&base_labels) {
        push(atom.iter().map(|v| -v).collect(), format!("-({label})"));
    }
    let flags = AlphabetFlags { symmetric_closure: true, ..a.flags() };
    Alphabet::new(a.dim(), atoms, Some(labels), flags).expect("negation closure preserves invariants")
}
