//! Deterministic seed derivation.
//!
//! Every stochastic step takes an explicit seed. Sub-tasks (trees, vehicles,
//! segments, folds) derive their own seed from the parent seed and a stream
//! index, so parallel and serial execution draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `parent`.
pub fn derive(parent: u64, stream: u64) -> u64 {
    mix(mix(parent) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Seed for the sub-stream named by `key`, independent of any ordering.
pub fn derive_keyed(parent: u64, key: &str) -> u64 {
    // FNV-1a over the key bytes.
    let h = key.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3));
    derive(parent, h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
