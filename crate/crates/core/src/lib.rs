//! Reach measurement and bid optimization for ad delivery under group-level
//! anonymity.
//!
//! Ad requests expose only a group of `k` users, never the individual.
//! This crate measures campaign reach from group-level win counts (exact
//! expectations, streaming updates, variance and concentration bounds),
//! prices requests by the probability that they still add reach, and ships
//! a deterministic experiment harness plus the `anonreach` CLI around a
//! second-price auction simulator.

pub mod auction;
pub mod binomial;
pub mod error;
pub mod harness;
pub mod measurement;
pub mod optimization;
pub mod population;

pub use error::{Error, Result};

pub(crate) mod rng {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Stream identifiers keeping RNG consumers independent of each other.
    pub mod domain {
        pub const MC_TRIAL: u64 = 1;
        pub const POPULATION: u64 = 2;
        pub const STREAM: u64 = 3;
        pub const PRICES: u64 = 4;
        pub const PERMUTATION: u64 = 5;
    }

    /// Deterministic generator for (master seed, domain, index). Every
    /// trial and purpose gets its own stream of one seeded cipher.
    pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((domain << 48) ^ index);
        rng
    }

    /// Deterministic child seed for builders that take a seed themselves.
    pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
        // splitmix64 over the combined words.
        let mut z = seed
            .wrapping_add((domain << 48) ^ index)
            .wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}
