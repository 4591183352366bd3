//! Seeding helpers.
//!
//! Every stage of a run draws from its own ChaCha stream. The stream seed is
//! the run seed mixed with a 64-bit FNV-1a hash of the stage name, so adding
//! a stage never perturbs the randomness of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a of a string.
pub fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named stage: `mix64(seed ^ fnv1a(stage))`.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    mix64(seed ^ fnv1a(stage))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stage_rng(seed: u64, stage: &str) -> Rng {
    rng_from_seed(stage_seed(seed, stage))
}

/// Seed for the `index`-th independent sub-stream of `seed` (per scene, per item).
pub fn substream(seed: u64, index: u64) -> Rng {
    rng_from_seed(mix64(seed.wrapping_add(mix64(index))))
}
