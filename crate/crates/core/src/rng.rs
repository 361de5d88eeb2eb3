//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a user seed plus a stream id, so results do not depend on the
//! order in which independent pieces of work run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids used by the fitting pipeline.
pub mod stream {
    pub const EM_RUN: u64 = 0x1000;
    pub const AUGMENT: u64 = 0x2000;
    pub const GBR_FIT: u64 = 0x3000;
    pub const AGBR_FIT: u64 = 0x3001;
    pub const GENERATOR: u64 = 0x4000;
}

pub fn derive_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a stream id (splitmix64 mix).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
