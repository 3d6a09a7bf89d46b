//! Seeded randomness helpers.
//!
//! All stochastic steps draw from [`ChaCha8Rng`], whose output stream is
//! fixed across platforms and crate versions. Independent sub-streams (one
//! per tree, per synthetic cell, per balancing step) are derived with a
//! splitmix64 mixer so that adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One step of splitmix64: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The first `count` outputs of a splitmix64 stream started at `seed`.
pub fn splitmix_stream(seed: u64, count: usize) -> Vec<u64> {
    let mut state = seed;
    (0..count).map(|_| splitmix64(&mut state)).collect()
}

/// Mixes a base seed with a salt into an independent child seed.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut state = base ^ salt.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut state)
}
