//! Reproducible random stream.
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`. Uniforms use the top 53 bits of each `u64` output,
//! `u = (x >> 11) * 2^-53`. Normals use the Box-Muller transform on two
//! such uniforms, `sqrt(-2 ln(1 - u1)) * (cos, sin)(2 pi u2)`, returning the
//! cosine branch first and caching the sine branch for the next call. These
//! definitions are fixed so other implementations can replay a stream.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

/// Serializable position of a [`StreamRng`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
    pub spare: Option<f64>,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.inner.get_seed(),
            word_pos: self.inner.get_word_pos(),
            spare: self.spare,
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut inner = ChaCha20Rng::from_seed(state.seed);
        inner.set_word_pos(state.word_pos);
        Self {
            inner,
            spare: state.spare,
        }
    }
}
