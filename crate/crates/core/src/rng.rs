//! Seeded, platform-independent randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for one trial of an experiment: `seed ^ trial`, mixed so that
/// neighbouring trials do not share low bits.
pub fn trial_stream(seed: u64, trial: u64) -> SeededRng {
    seeded(seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn standard_normals(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
