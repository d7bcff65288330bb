//! Instance generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// The first `labeled` points act as fixed medoids and weigh 0.
    pub labeled: usize,
}

/// Gaussian-ish blobs around random centres with random positive weights.
pub fn clustered_instance(n: usize, dim: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..16)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = &centres[rng.random_range(0..centres.len())];
            c.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    let labeled = (n / 20).max(1);
    let weights = (0..n)
        .map(|i| if i < labeled { 0.0 } else { rng.random_range(0.0..2.0) })
        .collect();
    Instance {
        points,
        weights,
        labeled,
    }
}
