//! SplitMix64 random number generation with named sub-streams.
//!
//! Every stochastic component (initialization, dropout, split sampling,
//! dual sparsification, task construction) draws from its own stream,
//! derived from the run seed and a fixed tag. Adding a consumer never
//! perturbs the draws of existing ones, and identical seeds produce
//! identical sequences on every platform.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: bijective 64-bit mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags. One per consumer, fixed forever.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const SPARSIFY: u64 = 4;
    pub const LINK_TASK: u64 = 5;
}

/// SplitMix64 generator.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    state: u64,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng { seed, state: seed }
    }

    /// Child stream for a named consumer. Derived from the original
    /// seed, not the current state, so stream identity is independent
    /// of draw order.
    pub fn stream(&self, tag: u64) -> Rng {
        Rng::from_seed(mix64(self.seed ^ mix64(tag.wrapping_mul(GOLDEN) ^ GOLDEN)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform integer in [0, bound). Lemire reduction; deterministic.
    #[inline]
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (((self.next_u64() as u128) * (bound as u128)) >> 64) as usize
    }

    /// Uniform in [-bound, bound).
    #[inline]
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        (self.next_f64() * 2.0 - 1.0) * bound
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
