//! Seeded random source shared by the generator, the samplers, the trainer
//! and trial construction.
//!
//! All randomness comes from [`SeededRng`], a ChaCha8 stream cipher
//! (`rand_chacha::ChaCha8Rng`). The 64-bit seed is expanded into the 256-bit
//! ChaCha key with `rand_core`'s `SeedableRng::seed_from_u64` (a PCG32
//! expansion), and independent substreams are selected with the ChaCha
//! 64-bit stream id. Derived quantities are defined on top of `next_u64`:
//!
//! * `uniform()`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)`: rejection sampling; draws `x = next_u64` until
//!   `x <= u64::MAX - (u64::MAX - n + 1) % n`, then returns `x % n`.
//! * `normal()`: Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` with two
//!   fresh uniforms per call (the sine partner is discarded).
//! * `choose(n, k)`: partial Fisher-Yates over `0..n`; step `i` swaps
//!   position `i` with `i + below(n - i)`; the first `k` positions are the
//!   sample, in draw order.

use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for an independent substream of `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(1.0 - u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn gaussian_vec(&mut self, dim: usize, std: f64) -> Vec<f64> {
        (0..dim).map(|_| std * self.normal()).collect()
    }

    /// `k` distinct indices from `0..n`, uniformly without replacement.
    pub fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot choose {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
