//! Seeded random-stream derivation.
//!
//! One root seed fans out into independent substreams addressed by stable
//! integer labels, so adding a new consumer of randomness never perturbs the
//! draws seen by existing ones. Streams are ChaCha12, keyed from the label
//! path via splitmix64 mixing; the derivation is pure integer arithmetic and
//! platform independent.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Top-level stream labels. Kept in one place so label collisions are
/// impossible to introduce by accident.
pub mod label {
    pub const RUN: u64 = 0x01;
    pub const DEPLOY: u64 = 0x02;
    pub const OWNER_SETUP: u64 = 0x03;
    pub const ROUND_SEED: u64 = 0x04;
    pub const PLAN: u64 = 0x05;
    pub const ELECTION: u64 = 0x06;
    pub const PROVIDER: u64 = 0x07;
    pub const RETRIEVAL: u64 = 0x08;
    pub const DETECTOR_SETUP: u64 = 0x09;
    pub const TRIAL: u64 = 0x0a;
}

/// One avalanche step of the splitmix64 generator.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a label into a seed.
pub fn mix(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label))
}

/// Derives the ChaCha12 stream addressed by `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha12Rng {
    let mut s = seed;
    for &part in path {
        s = mix(s, part);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Seed for one replicate run derived from the experiment root seed.
pub fn run_seed(root_seed: u64, replicate: u64) -> u64 {
    mix(mix(root_seed, label::RUN), replicate)
}
