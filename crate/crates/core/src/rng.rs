//! Seed derivation helpers.
//!
//! Every randomized component takes a single `u64` seed and derives
//! independent sub-streams from it, so that one scenario seed reproduces the
//! whole pipeline bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives a named sub-seed from a base seed.
///
/// Different `stream` tags yield statistically independent seeds; the same
/// pair always yields the same value.
pub fn derive_seed(base: u64, stream: &str) -> u64 {
    let mut h = splitmix64(base);
    for &b in stream.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

/// Deterministic RNG for the given base seed and stream tag.
pub fn stream_rng(base: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_stream_sensitive() {
        assert_eq!(derive_seed(7, "loss"), derive_seed(7, "loss"));
        assert_ne!(derive_seed(7, "loss"), derive_seed(7, "init"));
        assert_ne!(derive_seed(7, "loss"), derive_seed(8, "loss"));
    }
}
