//! Deterministic seed derivation.
//!
//! Every random choice in the pipeline flows from one global seed. Each stage
//! derives its own stream by hashing its name into the seed, so a stage run
//! in isolation draws exactly the same randomness as inside the full
//! pipeline.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the seed for a named stage from the global seed.
pub fn derive(global: u64, stage: &str) -> u64 {
    mix(global ^ fnv1a(stage.as_bytes()))
}

/// Derive a per-index seed (epoch counters, per-subgraph streams, ...).
pub fn derive_indexed(global: u64, stage: &str, index: u64) -> u64 {
    mix(derive(global, stage) ^ mix(index))
}

/// Seeded RNG used everywhere randomness is needed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
