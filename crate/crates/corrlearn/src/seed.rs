//! Deterministic seed derivation for replayable randomized pipelines.
//!
//! Every randomized stage derives its own seed from the run's master seed
//! and a fixed stream tag, so stages can run in any order (or concurrently)
//! without changing their draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a child seed from `master` and a stream `tag` by two rounds of
/// splitmix64 finalization.
pub fn derive(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for _ in 0..2 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// A replayable RNG for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
