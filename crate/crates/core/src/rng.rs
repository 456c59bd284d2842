//! Deterministic random streams.
//!
//! All randomness is derived from a master seed and a path of integers (stage
//! tag, partition index, run index, ...). Two computations that use the same
//! path see the same stream regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stage tags used in substream paths.
pub mod tag {
    pub const SEED_RUN: u64 = 1;
    pub const LEAF: u64 = 2;
    pub const COMPRESS: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const REDUCE: u64 = 5;
    pub const UNION: u64 = 6;
    pub const FINALIZE: u64 = 7;
    pub const TRIAL: u64 = 8;
    pub const RESTART: u64 = 9;
    pub const SPLIT: u64 = 10;
    pub const PROBE: u64 = 11;
    pub const BASELINE: u64 = 12;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `seed` refined by `path`.
pub fn substream(seed: u64, path: &[u64]) -> Rng {
    let mut state = seed;
    let mut h = splitmix64(&mut state);
    for &p in path {
        state ^= h.rotate_left(17) ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        h = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    Rng::from_seed(key)
}

/// Generator for a bare seed.
pub fn from_seed(seed: u64) -> Rng {
    substream(seed, &[])
}
