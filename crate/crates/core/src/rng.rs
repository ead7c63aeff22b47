//! Seed derivation.
//!
//! A master seed `s` yields the seed of round `r` as
//!
//! ```text
//! round_seed(s, r) = splitmix64(s + (r + 1) * 0x9E3779B97F4A7C15)   (mod 2^64)
//! ```
//!
//! Each round seed keys one ChaCha8 generator per [`Stream`], separated by
//! the ChaCha stream id. Ground truth and filter randomness therefore never
//! share draws, and changing the filter (or its particle count) leaves the
//! trajectory and the measurements untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn round_seed(master: u64, round: u64) -> u64 {
    splitmix64(master.wrapping_add(round.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Trajectory = 0,
    Measurement = 1,
    Filter = 2,
}

pub fn stream_rng(round_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
    rng.set_stream(stream as u64);
    rng
}
