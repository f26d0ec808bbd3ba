//! Seed derivation and the generator used throughout.
//!
//! Every random stream is a `ChaCha8Rng` seeded from a 64-bit value derived
//! by mixing a master seed with task tags, so parallel tasks get
//! independent streams and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator name recorded in instance metadata.
pub const RNG_NAME: &str = "rand_chacha-0.9/ChaCha8Rng::seed_from_u64";
/// Gaussian transform name recorded in instance metadata.
pub const NORMAL_NAME: &str = "rand_distr-0.5/StandardNormal(ziggurat)";

pub type ChainRng = ChaCha8Rng;

/// Stream tags keep derived seeds for different purposes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Restart = 1,
    Instance = 2,
    Fold = 3,
    Cell = 4,
    InitialState = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` for item `index` of `stream`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(stream as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn rng_from_seed(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}
