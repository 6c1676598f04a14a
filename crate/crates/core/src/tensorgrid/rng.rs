//! Seeded integer generator used for every random choice in the crate.
//!
//! The generator is SplitMix64: a 64-bit counter advanced by the golden-ratio
//! increment and passed through a fixed avalanche mix. The integer output
//! sequence depends only on the 64-bit state, so it is bit-identical on every
//! platform. Independent streams are obtained with [`SeedRng::split`] or
//! [`SeedRng::stream`].

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedRng {
    state: u64,
}

impl SeedRng {
    pub const ALGORITHM: &'static str = "splitmix64";

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// A generator for a named sub-purpose of `seed`; distinct `stream` ids
    /// give unrelated sequences.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Self::new(mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Detaches an independent generator and advances `self`.
    pub fn split(&mut self) -> SeedRng {
        SeedRng::new(mix64(self.next_u64()))
    }

    /// Uniform integer in `[0, n)` by rejection, so there is no modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller (one variate per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Draws a shift seed uniformly from the closed range `[1, n - 1]`.
pub fn gen_shift_seed(rng: &mut SeedRng, n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "shift seed range [1, {}] is empty",
            n as i64 - 1
        )));
    }
    Ok(1 + rng.below(n as u64 - 1) as usize)
}
