//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream whose 256-bit key is the tuple
//! `(master seed, grid index, replication, purpose)`. Two streams are
//! identical iff their keys are identical, and no stream depends on the
//! order in which other streams were consumed, so results do not change with
//! the number of worker threads.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct purposes never share a keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Purpose {
    /// Environment draws: context, arms, reward.
    Environment,
    /// Policy randomness (the `W_A` variables).
    Policy,
    /// Instance generation.
    Generator,
    /// Anything else; the payload separates sub-uses.
    Aux(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Environment => 1,
            Purpose::Policy => 2,
            Purpose::Generator => 3,
            Purpose::Aux(k) => (4u64 << 32) | u64::from(k),
        }
    }
}

/// Identifier of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub grid: u64,
    pub replication: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, grid: u64, replication: u64, purpose: Purpose) -> Self {
        Self {
            seed,
            grid,
            replication,
            purpose,
        }
    }

    /// Raw 256-bit key material.
    pub fn key_bytes(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.grid.to_le_bytes());
        key[16..24].copy_from_slice(&self.replication.to_le_bytes());
        key[24..].copy_from_slice(&self.purpose.tag().to_le_bytes());
        key
    }

    pub fn stream(&self) -> Stream {
        Stream {
            inner: ChaCha8Rng::from_seed(self.key_bytes()),
        }
    }
}

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    /// Stream keyed by a bare seed; handy for tests and one-off runs.
    pub fn from_seed(seed: u64) -> Self {
        StreamKey::new(seed, 0, 0, Purpose::Aux(0)).stream()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw with success threshold produced by [`bernoulli_threshold`].
    #[inline]
    pub fn bernoulli(&mut self, threshold: u64) -> bool {
        // u64::MAX encodes certainty.
        self.next_u64() < threshold || threshold == u64::MAX
    }

    /// Uniform index in `0..n` (n > 0), using rejection to avoid modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Threshold `t` such that `u64 < t` has probability `p` up to 2^-64.
pub fn bernoulli_threshold(p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        u64::MAX
    } else {
        // 2^64 * p rounded down; exact for dyadic p.
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}
