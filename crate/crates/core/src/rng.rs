//! Counter-based random numbers keyed by (seed, path, step).
//!
//! Every (seed, path, step) triple gets its own short stream, so ensembles reproduce bit for bit
//! regardless of how paths are scheduled across threads.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of one path's stream.
#[inline]
pub fn path_key(seed: u64, path: u64) -> u64 {
    mix64(seed ^ mix64(path.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Generator for a single (path, step) cell.
#[derive(Debug, Clone)]
pub struct CounterRng {
    base: u64,
    ctr: u64,
}

impl CounterRng {
    #[inline]
    pub fn new(seed: u64, path: u64, step: u64) -> Self {
        Self::from_key(path_key(seed, path), step)
    }

    #[inline]
    pub fn from_key(key: u64, step: u64) -> Self {
        CounterRng { base: key.wrapping_add(step.wrapping_mul(16).wrapping_mul(GAMMA)), ctr: 0 }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(1);
        mix64(self.base.wrapping_add(self.ctr.wrapping_mul(GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
