//! Seed derivation for replications, datasets and pilots.

use sha2::{Digest, Sha256};

/// First eight bytes of `sha256(base_seed || label || r)`, little endian. The label
/// is length-prefixed so distinct (label, r) pairs never collide by concatenation.
pub fn derive_seed(base_seed: u64, label: &str, r: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(r.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("32-byte digest"))
}

/// Seed of replication `r` of a method.
pub fn replication_seed(base_seed: u64, label: &str, r: u64) -> u64 {
    derive_seed(base_seed, &format!("method:{label}"), r)
}
