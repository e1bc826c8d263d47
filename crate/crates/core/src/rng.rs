//! Deterministic random streams.
//!
//! Every stream is a `ChaCha8Rng` seeded from `derive_seed(seed, purpose)`: the purpose tag is
//! hashed with FNV-1a, xor-ed into the user seed, and finalised with the SplitMix64 mixer.
//! Indexed streams append the index to the mix so parallel work is independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    splitmix64(seed ^ fnv1a(purpose))
}

pub fn stream(seed: u64, purpose: &str) -> LabRng {
    LabRng::seed_from_u64(derive_seed(seed, purpose))
}

pub fn indexed_stream(seed: u64, purpose: &str, index: u64) -> LabRng {
    LabRng::seed_from_u64(splitmix64(derive_seed(seed, purpose) ^ splitmix64(index)))
}
