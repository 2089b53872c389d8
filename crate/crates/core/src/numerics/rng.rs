//! Seeded, platform-portable random streams.
//!
//! Every stream is a ChaCha8 keystream (`rand_chacha`) keyed by a 64-bit seed
//! through `SeedableRng::seed_from_u64`, with an optional 64-bit stream id
//! selecting an independent keystream for the same seed. Gaussian variates
//! come from `rand_distr::StandardNormal` (ziggurat) applied to that stream.
//! Both algorithms are fully specified, so streams are identical on every
//! platform for the same seed and call sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream derived from `(seed, stream)`; used for per-item
    /// randomness in batch runs.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator for sub-stream `index` of this generator's seed.
    pub fn fork(&self, index: u64) -> Self {
        Self::with_stream(
            self.seed,
            self.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index + 1),
        )
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Raw 64-bit draw, e.g. to seed a child stream.
    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    pub fn bernoulli(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
