//! Seeded random streams.
//!
//! Every random draw in the toolkit comes from SplitMix64 (Steele, Lea and
//! Flood 2014) with the state initialised to the user seed. The derived
//! operations are fixed so sampled matrices and synthetic scenes can be
//! reproduced by other implementations:
//!
//! * `below(n)`: rejection sampling on `next_u64`, rejecting draws
//!   `>= u64::MAX - u64::MAX % n`, then `draw % n`.
//! * `unit()`: `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `normal()`: Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, one value
//!   per pair of `unit()` draws.
//! * `substream(seed, i)`: a fresh generator seeded with the `i`-th output of
//!   a SplitMix64 seeded at `seed ^ 0x9E3779B97F4A7C15`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct Stream {
    inner: SplitMix64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Independent stream number `index` derived from `seed`.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut parent = SplitMix64::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let mut derived = 0;
        for _ in 0..=index {
            derived = parent.next_u64();
        }
        Self::new(derived)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let draw = self.next_u64();
            if draw < zone {
                return draw % n;
            }
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.unit();
        let u2 = self.unit();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// `count` distinct indices from `0..population`, in draw order, via a
    /// partial Fisher-Yates shuffle.
    pub fn sample_distinct(&mut self, population: usize, count: usize) -> Vec<usize> {
        assert!(count <= population);
        let mut pool: Vec<usize> = (0..population).collect();
        for i in 0..count {
            let j = i + self.below((population - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}
