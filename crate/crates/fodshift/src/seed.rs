//! Deterministic seed fan-out.
//!
//! One master seed per experiment; every consumer (cohort noise, weight
//! init, shuffling, splits) derives its own stream through a labelled
//! FNV-1a hash so that adding a consumer never perturbs the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive a child seed from `(master, label, index)`.
pub fn derive(master: u64, label: &str, index: u64) -> u64 {
    let h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    let h = fnv1a(h, label.as_bytes());
    fnv1a(h, &index.to_le_bytes())
}

/// Seeded RNG for a labelled stream.
pub fn rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, label, index))
}
