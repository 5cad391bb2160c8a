//! Deterministic seed plumbing shared by data generation, training, and the
//! experiment harness.
//!
//! Every random quantity in the crate draws from a ChaCha8 stream addressed
//! by `(seed, stream id)`. Distinct concerns get distinct stream ids, so for
//! example a dataset's Bernoulli mask is unaffected by how many samples are
//! generated, and per-sample perturbation draws are independent of worker
//! scheduling (each sample owns stream `PERTURBATION_BASE + sample index`).
//!
//! The derivation function is fixed and documented so that datasets and
//! experiment runs are portable across implementations:
//! `derive_seed(base, index) = splitmix64(base ^ splitmix64(index + C))`
//! with `C = 0x9E3779B97F4A7C15` (the splitmix64 increment).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Feature matrix draws (standard Gaussian rows).
pub const STREAM_FEATURES: u64 = 1;
/// The per-dataset Bernoulli / mixed projection matrix.
pub const STREAM_PROJECTION: u64 = 2;
/// Multiplicative cost noise.
pub const STREAM_NOISE: u64 = 3;
/// Knapsack weight lattice draws.
pub const STREAM_WEIGHTS: u64 = 4;
/// TSP node coordinates.
pub const STREAM_COORDS: u64 = 5;
/// TSP per-node mixture coin.
pub const STREAM_COIN: u64 = 6;
/// Linear-predictor parameter initialization.
pub const STREAM_MODEL_INIT: u64 = 16;
/// Mini-batch shuffling (one stream per epoch seed).
pub const STREAM_SHUFFLE: u64 = 17;
/// Per-sample perturbation streams start here; sample `i` uses
/// `PERTURBATION_BASE + i`.
pub const PERTURBATION_BASE: u64 = 1 << 32;

/// The splitmix64 mixing function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a base seed and an index
/// (repetition number, epoch number, …). Documented formula; see module docs.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// A ChaCha8 generator positioned on `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn substreams_are_independent_and_reproducible() {
        let mut a1 = substream(42, STREAM_FEATURES);
        let mut a2 = substream(42, STREAM_FEATURES);
        let mut b = substream(42, STREAM_NOISE);
        let xs: Vec<u64> = (0..8).map(|_| a1.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn derive_seed_spreads_indices() {
        let s0 = derive_seed(7, 0);
        let s1 = derive_seed(7, 1);
        let s2 = derive_seed(8, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, s2);
        // Fixed derivation: these values are part of the portability contract.
        assert_eq!(derive_seed(0, 0), splitmix64(splitmix64(0)));
    }
}
