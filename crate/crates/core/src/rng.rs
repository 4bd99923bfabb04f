//! Pinned pseudo-random generation.
//!
//! Every seeded quantity in the crate (random tensors, compensation sets,
//! synthetic attention maps, bootstrap resamples) flows through [`SeededRng`].
//! The stream is fixed as follows and is part of the public contract, so
//! golden files never drift:
//!
//! * the core generator is ChaCha8 keyed with `rand_core`'s
//!   `seed_from_u64(seed)` expansion;
//! * `uniform01` takes the top 24 bits of one `u32` draw and scales by 2^-24,
//!   giving a binary32 value in `[0, 1)`;
//! * `below(n)` is Lemire's multiply-and-reject on 64-bit draws;
//! * `standard_normal` is the Box-Muller cosine branch on two 53-bit
//!   uniforms (one value per two draws, no caching).

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform binary32 in `[0, 1)`.
    pub fn uniform01(&mut self) -> f32 {
        (self.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    /// Uniform binary64 in `[0, 1)`.
    pub fn uniform01_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform01_f64();
        let u2 = self.uniform01_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// SplitMix64 finalizer; used to derive independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
