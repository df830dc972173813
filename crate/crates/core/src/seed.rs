//! Deterministic RNG stream derivation.
//!
//! Every random decision in an experiment draws from a stream keyed by the
//! global seed plus a tuple of integers (node id, round, purpose tag, ...).
//! Streams never depend on scheduling order, so parallel execution yields
//! bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream purpose tags.
pub mod tag {
    pub const TRAIN: u64 = 1;
    pub const ATTACK: u64 = 2;
    pub const REFERENCE: u64 = 3;
    pub const AUDIT_SEA: u64 = 10;
    pub const AUDIT_RS: u64 = 11;
    pub const AUDIT_AK: u64 = 12;
    pub const SAMPLING: u64 = 13;
    pub const AGGREGATE: u64 = 14;
    pub const INIT: u64 = 20;
    pub const DATA: u64 = 21;
    pub const ROLES: u64 = 22;
    pub const GRAPH: u64 = 23;
    pub const ANCHOR: u64 = 24;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed with an ordered key tuple into a new 64-bit seed.
pub fn derive(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn rng(base: u64, keys: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(base, keys))
}
