//! Deterministic random streams.
//!
//! Every stochastic step in the toolkit draws from a ChaCha20 stream whose
//! key is the SHA-256 digest of `(seed, label)`. ChaCha20 is counter-based, so
//! a stream is a pure function of its key. Uniform floats, bounded integers
//! and Gaussian draws are derived here from raw 64-bit words rather than
//! through `rand` distributions, which keeps fixtures stable across crate
//! upgrades.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub struct Stream {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"embkit/stream/v1");
        hasher.update(seed.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            inner: ChaCha20Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1].
    fn unit_open_left(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound) by rejection (no modulo bias).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "empty range");
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % bound) as usize;
            }
        }
    }

    /// Standard normal via Box–Muller; draws are produced in pairs and the
    /// sine branch is returned on the following call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.unit_open_left();
        let u2 = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Random permutation of `0..n` (Fisher–Yates, front to back).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx
    }
}
