//! Seeded streams.
//!
//! Every random draw in the crate comes from Xoshiro256++ (via `rand`)
//! seeded with `seed_from_u64`. Per-sample streams are derived as
//!
//! ```text
//! substream(seed, i) = Xoshiro256++::seed_from_u64(mix(seed ^ (0x9E3779B97F4A7C15 * (i + 1))))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer, so any implementation with the
//! same generator reproduces the same per-sample data.

use rand::rngs::Xoshiro256PlusPlus;
use rand::SeedableRng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream_seed(seed: u64, i: u64) -> u64 {
    mix(seed ^ GOLDEN.wrapping_mul(i.wrapping_add(1)))
}

pub fn substream(seed: u64, i: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(substream_seed(seed, i))
}
