//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by a path of integers
//! (master seed, example id, stream tag, batch index). The path is folded
//! through the SplitMix64 finalizer, and the result seeds a ChaCha8 stream.
//! Draws therefore do not depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep the sub-streams of one example disjoint.
pub mod stream {
    /// PREDICT's n0-sample selection pass.
    pub const SELECTION: u64 = 0x5e1e_c7;
    /// CERTIFY's N-sample estimation pass.
    pub const ESTIMATION: u64 = 0xe571_3a7e;
    /// Counts sampled to build the surrogate's training set.
    pub const DATASET: u64 = 0xda7a;
    /// Repeated resampling in the variance study.
    pub const RESAMPLE: u64 = 0x7e5a;
    pub const WEIGHT_INIT: u64 = 0x1417;
    pub const SHUFFLE: u64 = 0x5ef1;
    pub const AUGMENT: u64 = 0xa06e;
    pub const DATA_GEN: u64 = 0x6e4e;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`. Distinct paths give unrelated seeds.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A ChaCha8 generator positioned at the start of the stream `(seed, parts)`.
pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}
