//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a master seed mixed with a stream key, so results do not
//! depend on scheduling or on the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with an integer stream key.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(key.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// FNV-1a over a string, for keying streams by patient id or label.
pub fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn stream(seed: u64, key: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, key))
}

pub fn labelled_stream(seed: u64, label: &str) -> StreamRng {
    stream(seed, hash_label(label))
}
