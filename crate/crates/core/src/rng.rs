//! Deterministic random streams.
//!
//! Every draw comes from a ChaCha20 stream keyed by `(seed, purpose, index)`,
//! so a node's data or a replication's graph never depends on how many other
//! draws happened first or on which thread ran them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Per-replication seeds derived from a master seed; index = replication.
    Replication = 1,
    /// Node placement; index = connection attempt.
    Graph = 2,
    /// Cluster seeding; index unused.
    Clusters = 3,
    /// Covariates and noise; index = node.
    Data = 4,
    /// Free-form streams for Monte-Carlo diagnostics; index = caller's choice.
    Diagnostic = 5,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// Seed of replication `replication` under `master`.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    stream(master, Purpose::Replication, replication).next_u64()
}
