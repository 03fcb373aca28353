//! Seeded randomness.
//!
//! All sampling goes through [`SeededRng`], a PCG-XSH-RR generator over a
//! 64-bit linear congruential state (`rand_pcg::Pcg32`), constructed with
//! `seed_from_u64`. Uniform reals are 53-bit draws in `[0, 1)`. Independent
//! streams are derived from a base seed with [`derive_seed`].

use rand::SeedableRng;

pub type SeededRng = rand_pcg::Pcg32;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over `base` and `stream`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
