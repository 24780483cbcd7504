//! Reproducible random streams and inverse-transform variate generators.
//!
//! Every consumer of randomness owns an [`RngStream`] derived from the run's
//! root seed and a stream id. A stream is a ChaCha8 keystream whose key is
//! `mix64(seed)` and whose 64-bit stream selector is `stream_id`, so draws
//! from one stream never depend on how many draws another stream made.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::KernelError;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    mean: f64,
}

impl Exponential {
    pub fn new(mean: f64) -> Result<Self, KernelError> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(KernelError::InvalidDistribution(format!(
                "exponential mean must be positive and finite, got {mean}"
            )));
        }
        Ok(Self { mean })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        // 1 - u lies in (0, 1], keeping the log finite.
        -self.mean * (1.0 - rng.next_f64()).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    low: f64,
    high: f64,
}

impl Uniform {
    pub fn new(low: f64, high: f64) -> Result<Self, KernelError> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(KernelError::InvalidDistribution(format!(
                "uniform bounds must satisfy a < b, got [{low}, {high})"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let x = self.low + (self.high - self.low) * rng.next_f64();
        // Rounding can land exactly on the open bound.
        if x >= self.high {
            self.low
        } else {
            x
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pareto {
    shape: f64,
    scale: f64,
}

impl Pareto {
    /// Shape must exceed 1 so the distribution has a finite mean.
    pub fn new(shape: f64, scale: f64) -> Result<Self, KernelError> {
        if !(shape.is_finite() && shape > 1.0) {
            return Err(KernelError::InvalidDistribution(format!(
                "pareto shape must exceed 1, got {shape}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(KernelError::InvalidDistribution(format!(
                "pareto scale must be positive, got {scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale / (self.shape - 1.0)
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.scale / (1.0 - rng.next_f64()).powf(1.0 / self.shape)
    }
}
