//! Deterministic seed derivation.
//!
//! All stochastic code in the crate draws from `ChaCha8Rng` seeded through
//! [`derive_seed`], which mixes a base seed with a command/entity tag and an
//! index. Streams are therefore independent of thread scheduling and of how
//! many entities precede a given one: adding a profile never perturbs the
//! realizations of existing profiles.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; full-period 64-bit mixing.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(base, tag, index)`.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(base ^ 0x9E37_79B9_7F4A_7C15);
    for &b in tag.as_bytes() {
        h = mix(h ^ u64::from(b).wrapping_mul(0x0100_0000_01B3));
    }
    mix(h ^ index)
}

/// Seeded generator for the stream identified by `(base, tag, index)`.
pub fn stream_rng(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, index))
}
