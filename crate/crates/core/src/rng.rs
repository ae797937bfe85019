//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from ChaCha8 seeded with an
//! explicit `u64`. Work that fans out (bootstrap replicates, per-class
//! shuffles, per-fold training) takes a derived stream keyed by an index, so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mixes a child key into a seed; used to derive per-task seeds that are
/// themselves fed to [`seeded`] or [`stream`].
pub fn derive(seed: u64, key: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ key.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
