//! Benchmark crate: see `benches/attention.rs` for the canonical vs
//! query-sparse attention comparison.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded random Q/K/V buffers for a length-`l`, width-`d` attention call.
pub fn random_qkv(l: usize, d: usize, seed: u64) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = l * d;
    let mut mk = || (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<f32>>();
    (mk(), mk(), mk())
}
