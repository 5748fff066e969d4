//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wlecv_core::MultiSample;

/// Aligned normal sample with `m` populations of `n` observations.
pub fn normal_fixture(m: usize, n: usize, seed: u64) -> MultiSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..m)
        .map(|i| (0..n).map(|_| 0.1 * i as f64 + rng.gen::<f64>() - 0.5).collect())
        .collect();
    MultiSample::from_vecs(data, true).expect("fixture is finite and aligned")
}
