//! Counter-based random substreams.
//!
//! Every stochastic component in this crate draws from a ChaCha stream whose
//! 256-bit key is built from a root seed plus up to three path components.
//! Distinct paths give independent streams by construction, so simulation
//! replications and Monte Carlo draws can run in any order or in parallel
//! and still reproduce bit-identically.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives the substream keyed by `(seed, path)`. `path` may hold at most
/// three components.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    assert!(path.len() <= 3, "substream paths have at most 3 components");
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    for (i, c) in path.iter().enumerate() {
        key[8 * (i + 1)..8 * (i + 2)].copy_from_slice(&c.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream tags keeping unrelated consumers of the same seed apart.
pub mod tag {
    /// Per-(query, candidate) draws inside `simulate_dataset`.
    pub const SIM_CANDIDATE: u64 = 1;
    /// Per-draw streams of the least-favorable Monte Carlo.
    pub const MC_DRAW: u64 = 2;
    /// Per-replication child seeds of the size/power harness.
    pub const REPLICATION: u64 = 3;
}

/// A child seed for replication `index`, derived from the root seed.
pub fn child_seed(seed: u64, stream: u64, index: u64) -> u64 {
    use rand_chacha::rand_core::RngCore;
    substream(seed, &[stream, index]).next_u64()
}
