//! Per-replication random streams.
//!
//! Every replication owns an independent generator whose seed is a 64-bit
//! hash of `(seed, index)`, so ensembles can be run in any order or in
//! parallel and still merge to identical results.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, index: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    mix64(mix64(seed.wrapping_add(GOLDEN)) ^ index.wrapping_mul(GOLDEN).wrapping_add(GOLDEN))
}

pub fn stream(seed: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(stream_seed(seed, index))
}

/// Domain tags keep auxiliary streams (M/M/1 references, SDE paths) apart
/// from the main simulation streams sharing the same user seed.
pub(crate) mod tag {
    pub const MM1: u64 = 0x4d4d_315f_7265_6600;
    pub const SDE: u64 = 0x5344_455f_7061_7400;
}

pub(crate) fn tagged(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ tag)
}
