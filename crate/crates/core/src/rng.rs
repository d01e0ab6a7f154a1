//! Seeded random streams. All randomness in the crate flows through
//! [`Rng`] so a seed fully determines every run.

use rand::SeedableRng;

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent seed for a named stream and index, e.g. the
/// shuffle order of epoch 17 of trial seed 3.
pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    let mut h = splitmix(seed ^ 0x6a09_e667_f3bc_c909);
    for b in stream.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    splitmix(h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn stream(seed: u64, name: &str, index: u64) -> Rng {
    seeded(derive_seed(seed, name, index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
