//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is keyed by a path of integers
//! (base seed, replicate, stream tag, step, ...). Streams never depend on
//! scheduling order, so parallel execution reproduces serial results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named stream tags.
pub mod stream {
    pub const ENVIRONMENT: u64 = 0x454e_56;
    pub const POLICY: u64 = 0x504f_4c;
    pub const TUNER: u64 = 0x54_554e;
    pub const MODEL_DRAW: u64 = 0x4d_4f44;
    pub const ROLLOUT: u64 = 0x524f_4c;
    pub const OPTIMIZER: u64 = 0x4f_5054;
    pub const FIT: u64 = 0x464954;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed from a base seed and a key path.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &k in path {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn rng_for(base: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, path))
}

/// Stable 64-bit FNV-1a hash of a string, used to fold names into seeds.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
