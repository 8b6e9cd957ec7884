//! Counter-based random streams.
//!
//! Every stochastic operation draws from an [`RngStream`]. Replicated
//! experiments never share a stream: they draw one base seed from the caller's
//! stream and derive one independent ChaCha stream per replication index, so
//! results do not depend on how replications are scheduled across threads.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A single-owner stream of uniform variates.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    /// Stream `index` of the family keyed by `seed`.
    pub fn new(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index);
        Self { inner }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (((self.inner.next_u64() >> 11) as f64) + 0.5) * SCALE
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Draws a fresh base seed for a family of replication streams.
    pub fn fork(&mut self) -> Replications {
        Replications {
            seed: self.inner.next_u64(),
        }
    }
}

/// A family of independent streams indexed by replication number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replications {
    seed: u64,
}

impl Replications {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, index)
    }
}

/// SplitMix64 finalizer, used to derive sub-seeds from a seed and a label.
pub fn mix_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
