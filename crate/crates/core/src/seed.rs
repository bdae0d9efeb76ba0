//! Deterministic random streams.
//!
//! A stream is addressed by `(master_seed, stream_id)`. The address selects a
//! ChaCha8 keystream: the 256-bit key is expanded from the master seed (PCG32
//! expansion of `SeedableRng::seed_from_u64`) and the 64-bit stream word is
//! the stream id, so any stream can be reproduced in isolation. The first 256
//! bits of that keystream seed a Xoshiro256++ generator, which produces the
//! stream's draws. This scheme is fixed; changing it changes every recorded
//! output.
//!
//! Environment `k` uses stream id `k`; walk `k` uses `2^32 + k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

pub type SimRng = Xoshiro256PlusPlus;

pub const WALK_STREAM_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn environment(master_seed: u64, env_index: u64) -> Self {
        debug_assert!(env_index < WALK_STREAM_OFFSET);
        Self::new(master_seed, env_index)
    }

    pub fn walk(master_seed: u64, walk_index: u64) -> Self {
        Self::new(master_seed, WALK_STREAM_OFFSET + walk_index)
    }
}

pub fn derive_stream(seed: &SeedSpec) -> SimRng {
    let mut key = ChaCha8Rng::seed_from_u64(seed.master_seed);
    key.set_stream(seed.stream_id);
    Xoshiro256PlusPlus::from_rng(&mut key)
}
