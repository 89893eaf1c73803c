//! Counter-based seed derivation.
//!
//! Child seeds are derived from a master seed with SplitMix64 so that every
//! (master, stream) pair maps to an independent, reproducible rng and adding
//! new streams never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 output for the given state.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for logical stream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(1)))
}

/// A fresh rng for logical stream `stream` of `master`.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
