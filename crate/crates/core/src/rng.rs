//! Reproducible random streams.
//!
//! Generator `chacha20-sm64-v1`: the ChaCha20 block function (20 rounds, 64-bit block
//! counter, 64-bit stream id) keyed by four SplitMix64 outputs of the user seed, written
//! little-endian. Independent streams of one seed differ only in the stream id, so a
//! simulation can be split by index without coordinating generator state.
//!
//! Uniforms are `(next_u64 >> 11) + 0.5` scaled by `2^-53`, which lies strictly inside
//! `(0, 1)`; normals are the inverse standard normal CDF of one uniform.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::special::normal_quantile;

/// Identifier recorded in sidecars so a stream can be regenerated elsewhere.
pub const GENERATOR_ID: &str = "chacha20-sm64-v1";

#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha20Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamRng {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut sm = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut sm).to_le_bytes());
        }
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in the open interval `(0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    /// Index drawn with probability proportional to `weights` (nonnegative, positive sum).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.uniform() * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        // rounding left target >= acc: fall back to the last atom with mass
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}
