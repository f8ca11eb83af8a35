//! Keyed random streams.
//!
//! Every stream is a ChaCha8 generator seeded from the master seed and
//! positioned on its own ChaCha stream id, derived from the replicate index
//! and a [`Role`]. Streams never depend on scheduling order, so replicates
//! may run in any order or in parallel with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

const ROLE_BITS: u32 = 3;

/// What a stream is used for. Distinct roles never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Holding times and merge-size choices.
    Clock = 0,
    /// Which blocks or levels take part in an event.
    Subset = 1,
    /// Brownian increments.
    Brownian = 2,
    /// Random ordering of supplied initial positions.
    Init = 3,
    /// Auxiliary draws made by diagnostics.
    Analysis = 4,
}

/// `(master seed, replicate)` pair identifying one replicate's streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub replicate: u64,
}

impl StreamKey {
    pub fn new(seed: u64, replicate: u64) -> Self {
        Self { seed, replicate }
    }

    pub fn stream(&self, role: Role) -> Stream {
        stream_for(self.seed, self.replicate, role)
    }
}

/// Reproducible stream for `(master_seed, replicate, role)`.
///
/// Replicate indices must stay below `2^61`.
pub fn stream_for(master_seed: u64, replicate: u64, role: Role) -> Stream {
    debug_assert!(replicate < (1 << (64 - ROLE_BITS)));
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((replicate << ROLE_BITS) | role as u64);
    rng
}
