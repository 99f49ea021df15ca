//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`Xoshiro256PlusPlus`], seeded
//! through SplitMix64 (`seed_from_u64`). Both algorithms are fully specified
//! (Blackman & Vigna), so a seed produces the same stream on every platform.
//! Independent consumers derive their own stream with [`substream`] instead of
//! sharing one generator, which keeps results stable when call order changes.
//!
//! [`Xoshiro256PlusPlus`]: rand_xoshiro::Xoshiro256PlusPlus

pub use rand_xoshiro::Xoshiro256PlusPlus as SeededRng;

use rand::SeedableRng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Stream `tag` of `seed`. Mixes the pair with the SplitMix64 finalizer.
pub fn substream(seed: u64, tag: u64) -> SeededRng {
    seeded(mix64(seed ^ mix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15))))
}

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
