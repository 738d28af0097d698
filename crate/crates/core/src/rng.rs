//! Seeded random streams.
//!
//! Every random quantity in the crate comes from [`SeededRng`], a ChaCha20
//! stream cipher used as a counter-based generator. The mapping from a seed
//! to numbers is fixed so that a seed means the same thing in any
//! implementation:
//!
//! * key: the 64-bit seed in little-endian order in bytes 0..8, zeros elsewhere;
//! * stream id: a 64-bit purpose tag (see the `STREAM_*` constants);
//! * word order: ChaCha20 (20 rounds), block counter starting at 0, each
//!   `u64` built from two consecutive 32-bit output words, low word first;
//! * uniform: `(u >> 11) * 2^-53` in `[0, 1)`;
//! * standard normal: Box–Muller on `u1 = 1 - uniform`, `u2 = uniform`,
//!   returning `sqrt(-2 ln u1) cos(2π u2)` then `sqrt(-2 ln u1) sin(2π u2)`;
//! * Rademacher: sign from the top bit of one `u64` (set bit means `-1`).

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::real::Real;

pub const STREAM_DATA: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_PROBES: u64 = 3;
pub const STREAM_INIT: u64 = 4;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() >> 63 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn normal_vec<T: Real>(&mut self, d: usize) -> Vec<T> {
        (0..d).map(|_| T::lit(self.standard_normal())).collect()
    }

    pub fn rademacher_vec<T: Real>(&mut self, d: usize) -> Vec<T> {
        (0..d).map(|_| T::lit(self.rademacher())).collect()
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical<T: Real>(&mut self, weights: &[T]) -> usize {
        let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
        let mut u = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            u -= w.as_f64();
            if u < 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }
}
