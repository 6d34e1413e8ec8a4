//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`. Uniform draws use rand's standard `f64` conversion,
//! `(next_u64 >> 11) * 2^-53`, scaled affinely onto `[low, high]`; normal
//! draws use the ziggurat sampler from `rand_distr`. Both are pure integer
//! and IEEE arithmetic, so streams are identical on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        SeededStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.unit()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in `[low, high]`.
    pub fn integer(&mut self, low: usize, high: usize) -> usize {
        self.rng.gen_range(low..=high)
    }
}

/// Derives an independent seed for a named sub-stream.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
