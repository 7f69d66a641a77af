//! Named random streams derived from a master seed.
//!
//! Every stream is keyed by a list of labels, hashed together with the master
//! seed. Adding a new label (a new policy, a new seed) never shifts the
//! streams of existing labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Derive a 64-bit stream id from a master seed and a list of labels.
pub fn stream_id(master_seed: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master_seed: u64, labels: &[&str]) -> SimRng {
    SimRng::seed_from_u64(stream_id(master_seed, labels))
}

pub fn from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
