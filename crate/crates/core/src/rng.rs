//! Counter-based random substreams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 keystream addressed by
//! `(seed, replica, role)`. The key is derived from the seed and the 64-bit
//! stream id packs the replica index with the role, so two substreams never
//! overlap and any replica can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for within one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamRole {
    ImmigrationTimes = 0,
    ImmigrationMarks = 1,
    HawkesProposals = 2,
    HawkesMarks = 3,
    MarkIntegration = 4,
    Oracle = 5,
}

const ROLE_BITS: u32 = 8;

/// Opens the substream for `(seed, index, role)`.
pub fn substream(seed: u64, index: u64, role: StreamRole) -> ChaCha8Rng {
    assert!(index < (1u64 << (64 - ROLE_BITS)), "replica index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << ROLE_BITS) | role as u64);
    rng
}
