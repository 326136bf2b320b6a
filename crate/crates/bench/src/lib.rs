//! Fixed problem instances shared by the benchmarks.

use gaugeopt::alphabet::build_canonical;
use gaugeopt::rng::{seeded, standard_normals};
use gaugeopt::{Alphabet, LinOp, MachineProblem};
use rand::Rng;

/// Gaussian alphabet of `n` atoms in `R^d`.
pub fn gaussian_alphabet(d: usize, n: usize, seed: u64) -> Alphabet {
    let mut rng = seeded(seed);
    let atoms = (0..n).map(|_| standard_normals(&mut rng, d)).collect();
    Alphabet::from_atoms(d, atoms).expect("random atoms are finite")
}

/// Canonical alphabet in `R^d` under an `m x d` Gaussian operator,
/// observing an `r`-sparse model with a little noise.
pub fn canonical_problem(d: usize, m: usize, r: usize, seed: u64) -> MachineProblem {
    let a = build_canonical(d).expect("d >= 1");
    let op = LinOp::gaussian(m, d, seed);
    let mut rng = seeded(seed.wrapping_add(1));
    let mut x = vec![0.0; d];
    for i in rand::seq::index::sample(&mut rng, d, r) {
        x[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    let y: Vec<f64> = op
        .apply(&x)
        .expect("dimensions match")
        .iter()
        .zip(standard_normals(&mut rng, m))
        .map(|(v, e)| v + 0.01 * e)
        .collect();
    MachineProblem::from_alphabet(&op, &a, y, r as f64, r).expect("valid problem")
}
