//! Deterministic per-trajectory random streams.
//!
//! Each trajectory gets its own ChaCha12 generator (counter based, 2^64
//! blocks per stream) seeded from `stream_seed(master, index)`. Trajectory
//! `i` of an ensemble is therefore bit-identical to a standalone run with
//! that seed, no matter how trajectories are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type TrajectoryRng = ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble with the given master seed:
/// `mix64(master ^ mix64(index + GOLDEN_GAMMA))`.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> TrajectoryRng {
    ChaCha12Rng::seed_from_u64(seed)
}
