//! Seed derivation for independent, reproducible RNG streams.
//!
//! Every random decision in the pipeline draws from a ChaCha stream whose
//! seed is derived from a master seed plus a tuple of context words
//! (round, agent id, epoch, ...). Streams never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_INIT: u64 = 0x494e_4954;
pub const TAG_EPOCH: u64 = 0x4550_4f43;
pub const TAG_SAMPLE: u64 = 0x5341_4d50;
pub const TAG_CLIENT: u64 = 0x434c_4e54;
pub const TAG_BALANCE: u64 = 0x4241_4c41;
pub const TAG_SPLIT: u64 = 0x5350_4c49;
pub const TAG_PARTITION: u64 = 0x5041_5254;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes an ordered list of words into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parts: &[u64]) -> ChaCha8Rng {
    rng_from(derive_seed(parts))
}
