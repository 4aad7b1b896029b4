//! Keyed random streams.
//!
//! Every random draw in a protocol run comes from a stream identified by
//! `(seed, run, trial, role, user)`. The identifier is mixed into a ChaCha8
//! key, so equal identifiers replay the same sequence and distinct ones are
//! independent for all practical purposes. Nothing depends on which thread
//! consumes which stream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The party drawing randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u64)]
pub enum Role {
    User = 1,
    Shuffler = 2,
    Collector = 3,
    Generator = 4,
}

/// Identifies one protocol run; hands out per-party streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialRng {
    pub seed: u64,
    pub run: u64,
    pub trial: u64,
}

impl TrialRng {
    pub fn new(seed: u64, run: u64, trial: u64) -> Self {
        TrialRng { seed, run, trial }
    }

    /// Single-run shorthand: `run = trial = 0`.
    pub fn from_seed(seed: u64) -> Self {
        TrialRng::new(seed, 0, 0)
    }

    pub fn stream(&self, role: Role, user: u64) -> RngStream {
        let mut state = splitmix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        for word in [self.run, self.trial, role as u64, user] {
            state = splitmix64(state ^ word);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        RngStream(ChaCha8Rng::from_seed(key))
    }
}

/// A deterministic random stream owned by one party.
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer (Steele, Lea & Flood).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
