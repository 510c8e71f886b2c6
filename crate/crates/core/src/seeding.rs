//! Order-independent RNG derivation.
//!
//! Every random stream is keyed by a base seed plus a list of string parts
//! (record id, round, operation, ...). The parts are hashed with SHA-256, so
//! a stream depends only on its key, never on how many streams were drawn
//! before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        // length prefix keeps ("ab","c") and ("a","bc") apart
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(base: u64, parts: &[&str]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
