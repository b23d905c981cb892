//! Seeded random source shared by weight initialization, data splitting and
//! the synthetic cohort generator.
//!
//! The generator is ChaCha20 (RFC 7539 block function, 20 rounds) keyed with
//! the 64-bit seed written little-endian into the first 8 key bytes, the
//! remaining 24 key bytes zero, and the 64-bit stream id selecting the
//! nonce. Draws are consumed as little-endian `u64` words.
//!
//! * uniform `[0,1)`: `(word >> 11) · 2⁻⁵³`
//! * standard normal: Box–Muller on two consecutive uniforms `u1, u2`,
//!   returning `sqrt(-2 ln(1 - u1)) · cos(2π u2)` (the sine branch is discarded)
//!
//! These rules are enough to reproduce every generated dataset bit-for-bit
//! from another language.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct SeqRng {
    inner: ChaCha20Rng,
}

impl SeqRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(1.0 - u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform integer in `0..n` (n > 0), by rejection.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher–Yates, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
