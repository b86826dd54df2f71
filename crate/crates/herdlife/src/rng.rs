//! Seed derivation and the truncated draws used by the generator.
//!
//! Sub-seeds are derived by hashing a tag into the base seed so that
//! independent pipeline stages (split, init, batching, per-cow streams)
//! get decorrelated but fully reproducible streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic sub-seed for a named pipeline stage.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, finalized with splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(base ^ h)
}

/// Sub-seed for the `i`-th element of a named stream.
pub fn derive_seed_indexed(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(derive_seed(base, tag) ^ splitmix64(index))
}

pub fn rng_for(base: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag))
}

pub fn rng_for_indexed(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed_indexed(base, tag, index))
}

/// Normal draw truncated to [min, max] by rejection, clamping after a
/// bounded number of attempts so pathological targets still terminate.
pub fn trunc_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, min: f64, max: f64) -> f64 {
    debug_assert!(min <= max);
    if sd <= 0.0 {
        return mean.clamp(min, max);
    }
    for _ in 0..256 {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if (min..=max).contains(&v) {
            return v;
        }
    }
    mean.clamp(min, max)
}

/// Uniform draw over [lo, hi).
pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Deterministic Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
