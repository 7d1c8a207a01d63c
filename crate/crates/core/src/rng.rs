//! Splittable, counter-based random streams.
//!
//! Every consumer derives its own key from a parent seed and a path of tags
//! (run index, mechanism, replicate, attempt ...). A key seeds a ChaCha8
//! block cipher stream, so draws depend only on the key and never on the
//! order in which streams are created or consumed.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normal;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child key for `tag` under `parent`.
pub fn derive(parent: u64, tag: u64) -> u64 {
    mix64(parent ^ mix64(tag.wrapping_mul(GOLDEN_GAMMA).wrapping_add(GOLDEN_GAMMA)))
}

/// Child key for a path of tags.
pub fn derive_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |key, &tag| derive(key, tag))
}

pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (unbiased, platform independent).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal draw by inverse-CDF transform.
    pub fn standard_normal(&mut self) -> f64 {
        normal::quantile(self.uniform())
    }
}
