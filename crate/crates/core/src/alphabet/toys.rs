//! Small worked examples where the gauge underestimates the sparse
//! decomposition cost.
//!
//! Each toy carries a model x# that is a nonnegative combination of a few
//! atoms, together with an alternative decomposition using more atoms but
//! smaller total mass.

use super::{build_spiral_with, spiral_point, Alphabet, AlphabetError, AlphabetFlags, Model};
use crate::gauge::Decomposition;

#[derive(Debug, Clone)]
pub struct Toy {
    pub alphabet: Alphabet,
    pub model: Model,
    /// The cheaper, less sparse decomposition of the same model.
    pub alternative: Decomposition,
}

impl Toy {
    pub fn x_sharp(&self) -> &[f64] {
        &self.model.vector
    }
}

/// Spiral alphabet with x# = (1,1)/(4 sqrt 2), the spiral point at t = 1/4.
///
/// The grid always contains t in {1/4, 1/2, 2}. x# is 1-sparse with unit
/// coefficient, while the t=2 and t=1/2 atoms represent it with total mass
/// 5/(8 sqrt 2).
pub fn spiral(n_atoms: usize) -> Result<Toy, AlphabetError> {
    let alphabet = build_spiral_with(n_atoms, &[0.25, 0.5, 2.0])?;
    let find = |t: f64| alphabet.find_atom(&spiral_point(t), 1e-12).expect("grid contains t");
    let sharp = find(0.25);
    let half = find(0.5);
    let end = find(2.0);
    let s = 1.0 / (4.0 * 2f64.sqrt());
    let model = Model::with_decomposition(alphabet.atom(sharp).to_vec(), Decomposition::single(sharp, 1.0));
    // (s, s) = s/2 * (2, 0) + 2s * (0, 1/2)
    let alternative = Decomposition::from_pairs(vec![(end, s / 2.0), (half, 2.0 * s)]);
    debug_assert!(model.vector.iter().all(|v| (v - s).abs() < 1e-15));
    Ok(Toy { alphabet, model, alternative })
}

fn rank_one(u: [f64; 3], v: [f64; 3]) -> Vec<f64> {
    (0..9).map(|idx| u[idx / 3] * v[idx % 3]).collect()
}

/// Rank-one 3x3 alphabet (row-major vectorization) with the two sparse atoms
/// A1 = u1 v1^T, A2 = u2 v2^T and the three atoms of the cheaper
/// decomposition of x# = A1/2 + A2/2.
pub fn sparse_pca() -> Toy {
    let r3 = 1.0 / 3f64.sqrt();
    let r2 = 1.0 / 2f64.sqrt();
    let u1 = [r3, r3, r3];
    let u2 = [r2, -r2, 0.0];
    let a1 = rank_one(u1, [0.3122, 0.95, 0.0]);
    let a2 = rank_one(u2, [0.0, 0.95, 0.3122]);
    let x: Vec<f64> = a1.iter().zip(&a2).map(|(p, q)| 0.5 * (p + q)).collect();
    // the middle column of x# is 0.475 (u1 + u2)
    let col: [f64; 3] = [x[1], x[4], x[7]];
    let col_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    let w = [col[0] / col_norm, col[1] / col_norm, col[2] / col_norm];
    let b1 = rank_one(u1, [1.0, 0.0, 0.0]);
    let b2 = rank_one(w, [0.0, 1.0, 0.0]);
    let b3 = rank_one(u2, [0.0, 0.0, 1.0]);
    let c_side = 0.5 * 0.3122;
    let atoms = vec![a1, a2, b1, b2, b3];
    let labels = ["A1#", "A2#", "u1 e1^T", "w e2^T", "u2 e3^T"].map(String::from).to_vec();
    let alphabet = Alphabet::new(9, atoms, Some(labels), AlphabetFlags::default())
        .expect("toy atoms are valid");
    let model = Model::with_decomposition(x, Decomposition::from_pairs(vec![(0, 0.5), (1, 0.5)]));
    let alternative = Decomposition::from_pairs(vec![(2, c_side), (3, col_norm), (4, c_side)]);
    Toy { alphabet, model, alternative }
}

/// Group-sparsity toy in R^3: A1 = (1,1,0)/sqrt 2, A2 = (0,-sqrt 7/4, 3/4),
/// the canonical vectors e1, e2, e3, and x# = A1/2 + A2/2.
pub fn group_sparsity() -> Toy {
    let r2 = 1.0 / 2f64.sqrt();
    let s7 = 7f64.sqrt();
    let atoms = vec![
        vec![r2, r2, 0.0],
        vec![0.0, -s7 / 4.0, 0.75],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let labels = ["A1#", "A2#", "e1", "e2", "e3"].map(String::from).to_vec();
    let flags = AlphabetFlags { unit_norm: true, ..Default::default() };
    let alphabet = Alphabet::new(3, atoms, Some(labels), flags).expect("toy atoms are valid");
    let x = group_sparsity_x_sharp();
    let model = Model::with_decomposition(x.clone(), Decomposition::from_pairs(vec![(0, 0.5), (1, 0.5)]));
    let alternative = Decomposition::from_pairs(vec![(2, x[0]), (3, x[1]), (4, x[2])]);
    Toy { alphabet, model, alternative }
}

/// x# = (1/(2 sqrt 2), 1/(2 sqrt 2) - sqrt 7/8, 3/8).
pub fn group_sparsity_x_sharp() -> Vec<f64> {
    let h = 1.0 / (2.0 * 2f64.sqrt());
    vec![h, h - 7f64.sqrt() / 8.0, 0.375]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn check(toy: &Toy, tol: f64) {
        let truth = toy.model.true_decomposition.as_ref().unwrap();
        for dec in [truth, &toy.alternative] {
            let x = dec.reconstruct(&toy.alphabet);
            for (a, b) in x.iter().zip(toy.x_sharp()) {
                assert_abs_diff_eq!(a, b, epsilon = tol);
            }
        }
        assert!(toy.alternative.mass() < truth.mass());
    }

    #[test]
    fn spiral_toy_decompositions() {
        let toy = spiral(9).unwrap();
        check(&toy, 1e-15);
        assert_abs_diff_eq!(toy.alternative.mass(), 5.0 / (8.0 * 2f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn sparse_pca_toy_decompositions() {
        let toy = sparse_pca();
        check(&toy, 1e-12);
        let c = toy.alternative.coeffs();
        assert_abs_diff_eq!(c[0], 0.1561, epsilon = 1e-4);
        assert_abs_diff_eq!(c[1], 0.6717, epsilon = 1e-4);
        let w = toy.alphabet.atom(3);
        assert_abs_diff_eq!(w[1], 0.9082, epsilon = 1e-4);
        assert_abs_diff_eq!(w[4], -0.0918, epsilon = 1e-4);
        assert_abs_diff_eq!(w[7], 0.4082, epsilon = 1e-4);
    }

    #[test]
    fn group_toy_decompositions() {
        let toy = group_sparsity();
        check(&toy, 1e-15);
        assert_abs_diff_eq!(toy.alternative.mass(), 0.7514, epsilon = 1e-4);
    }
}
