//! Seed derivation and content digests.
//!
//! Every random decision in the crate draws from a ChaCha stream seeded by
//! [`derive_seed`], which mixes the run's master seed with a stable record
//! key and a domain tag. Two records never share a stream, and a record's
//! stream does not depend on which worker processes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stable 64-bit seed for `(master_seed, key, domain)`.
pub fn derive_seed(master_seed: u64, key: &str, domain: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// RNG for one record in one domain.
pub fn record_rng(master_seed: u64, key: &str, domain: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master_seed, key, domain))
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a value's canonical (compact, field-ordered) JSON form.
pub fn config_hash<T: serde::Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    sha256_hex(&bytes)
}
