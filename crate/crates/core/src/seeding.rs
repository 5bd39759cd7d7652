//! Deterministic seed derivation.
//!
//! Every random stream in the harness is derived from a single master seed
//! by hashing `(master, episode, domain)` with SHA-256. Distinct domains
//! ("agent", "env", ...) give independent streams, and the derivation is
//! stable across platforms and thread schedules, which is what makes
//! serial and parallel benchmark runs byte-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a 32-byte seed from a master seed, an episode index, and a
/// domain tag.
pub fn split_seed(master: u64, episode: u64, domain: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(episode.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.finalize().into()
}

/// A ChaCha8 generator seeded from [`split_seed`].
pub fn rng_for(master: u64, episode: u64, domain: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(split_seed(master, episode, domain))
}
