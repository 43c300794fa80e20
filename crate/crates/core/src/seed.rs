//! Seed derivation. Every random draw in the crate goes through a
//! `ChaCha8Rng` built from a 64-bit seed, and per-item seeds are derived by
//! mixing `(base, index)` so that datasets do not depend on generation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of a stream rooted at `base`.
pub fn derive(base: u64, index: u64) -> u64 {
    mix64(mix64(base) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Named sub-stream, so that e.g. evaluation and training seeds never overlap.
pub fn stream(base: u64, name: &str) -> u64 {
    let mut h = mix64(base);
    for b in name.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    h
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
