//! Seeded generator shared by every sampling routine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in output files so a draw can be replayed.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng/seed_from_u64";

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the base seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
