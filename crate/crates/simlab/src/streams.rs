//! Derivation of per-replication rng streams.
//!
//! Each replication of each experiment cell draws from a `ChaCha8` stream
//! seeded by `SHA-256(tag, seed, cell, replication, attempt)`. Streams are
//! therefore independent of the worker schedule: any thread can run any
//! replication and the realised randomness is identical. The `attempt`
//! counter gives failed replications a fresh stream without disturbing the
//! streams of their neighbours.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Domain separator so that streams never collide with other hash uses.
const STREAM_TAG: &[u8] = b"simlab.stream.v1";

/// The rng stream of one (cell, replication, attempt) triple.
pub fn rep_rng(seed: u64, cell: &str, rep: u64, attempt: u32) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(STREAM_TAG);
    h.update(seed.to_le_bytes());
    h.update((cell.len() as u64).to_le_bytes());
    h.update(cell.as_bytes());
    h.update(rep.to_le_bytes());
    h.update(attempt.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
