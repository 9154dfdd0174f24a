//! Reproducible random streams.
//!
//! Every path draws from its own ChaCha8 stream selected by `(seed,
//! substream)`, so ensembles can be generated in any order or on any number
//! of threads and still produce identical variates.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Namespaces for substream ids so that different stages of a run never
/// share variates. The tag occupies the top 16 bits of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum StreamTag {
    Plain = 0,
    Pilot = 1,
    Regression = 2,
    Crude = 3,
    Importance = 4,
    FullTest = 5,
    SurrogateTest = 6,
}

impl StreamTag {
    /// Stream id of path `index` within this namespace; `slot` separates
    /// repeated simulations (e.g. one per step size) inside the namespace.
    pub fn stream(self, slot: u16, index: u64) -> u64 {
        debug_assert!(index < 1 << 32);
        ((self as u64) << 48) | ((slot as u64) << 32) | index
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    substream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, substream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(substream);
        Self {
            seed,
            substream,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self) -> u64 {
        self.substream
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform_open().ln() / rate
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
