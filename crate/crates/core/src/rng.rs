//! Seeding helpers. Every stochastic component draws from its own ChaCha8
//! stream, derived from one top-level seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type BlissRng = ChaCha8Rng;

/// Name recorded in chain metadata so that runs can be replayed.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Stream identifiers for [`derive_seed`].
pub mod stream {
    pub const GIBBS: u64 = 1;
    pub const SANN: u64 = 2;
    pub const CURVES: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const PRIOR_ALPHA: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derives a child seed for `stream` from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from_seed(seed: u64) -> BlissRng {
    BlissRng::seed_from_u64(seed)
}
