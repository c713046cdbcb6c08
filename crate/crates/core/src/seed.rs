//! Seed derivation and the generator used everywhere randomness appears.
//!
//! Every stream is a `ChaCha8Rng` seeded from a 64-bit value. Sub-seeds are
//! produced by folding tuples of integers through the SplitMix64 finalizer,
//! so they are stable across platforms and releases of the standard library.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Recorded in every report so results can be traced to a generator.
pub const RNG_IDENTITY: &str =
    "ChaCha8Rng (rand_chacha 0.9) via seed_from_u64; sub-seeds by SplitMix64 tuple folding; normals via rand_distr 0.5 ziggurat";

/// Domain tags keep sub-seeds for different purposes apart.
pub mod domain {
    pub const TRIAL: u64 = 0x7452_4941_4c00_0001;
    pub const DATA: u64 = 0x4441_5441_0000_0002;
    pub const WEIGHTS: u64 = 0x5745_4947_4854_0003;
    pub const SVM: u64 = 0x5356_4d00_0000_0004;
    pub const AUGMENT: u64 = 0x4155_474d_0000_0005;
    pub const SPLIT: u64 = 0x5350_4c49_5400_0006;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds an ordered tuple of integers into one seed.
pub fn derive(parts: &[u64]) -> u64 {
    let mut acc = splitmix64(parts.len() as u64);
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p));
    }
    acc
}

/// FNV-1a over UTF-8 bytes, for folding string ids into seeds.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
