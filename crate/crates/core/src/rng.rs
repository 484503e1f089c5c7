//! Seed plumbing. Every random stream is a ChaCha8 generator whose seed is
//! derived from a parent seed and a textual tag, so streams for different
//! phases and units never overlap and can be reproduced independently.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Prng = ChaCha8Rng;

/// 64-bit FNV-1a of `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// `seed ⊕ fnv1a64(tag)`: the per-phase seed derivation rule.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    seed ^ fnv1a64(tag.as_bytes())
}

/// Seed for unit `index` within a phase (teacher number, eval seed, ...).
pub fn derive_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    derive_seed(seed, tag).wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn prng(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

pub fn normal(rng: &mut Prng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut Prng, low: f64, high: f64) -> f64 {
    rng.random_range(low..high)
}

pub fn below(rng: &mut Prng, n: usize) -> usize {
    rng.random_range(0..n)
}

pub fn shuffle<T>(rng: &mut Prng, items: &mut [T]) {
    items.shuffle(rng);
}
