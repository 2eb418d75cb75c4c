//! Counter-based random streams.
//!
//! Every random draw in the stochastic engine is addressed by
//! `(master seed, walker index, step index)`. A fresh generator is built from
//! that triple, so results do not depend on how walkers are scheduled over
//! threads.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

/// Step index reserved for drawing initial positions.
pub const INIT_STEP: u64 = u64::MAX;

#[inline]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finaliser (a bijection on u64)
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one walker at one step.
#[inline]
pub fn stream(seed: u64, walker: u64, step: u64) -> Pcg64Mcg {
    let key = mix64(mix64(mix64(seed) ^ walker) ^ step);
    Pcg64Mcg::seed_from_u64(key)
}
