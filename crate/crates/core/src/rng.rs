//! Deterministic, splittable random streams.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit run seed and
//! positioned on a 64-bit stream id. Stream ids are derived from a purpose tag
//! and a list of discriminators (configuration, condition, split, class, ...)
//! by folding each word through the SplitMix64 finalizer:
//!
//! ```text
//! h = purpose_tag
//! for w in discriminators: h = splitmix64(h ^ w)
//! ```
//!
//! The algorithm is fixed; changing it changes every persisted result.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is the purpose tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Initialization of the Original model (and the transfer source).
    Init = 1,
    /// Independent initialization of the merged model (Red-I).
    InitIndependent = 2,
    /// Measurement sampling.
    Shots = 3,
    /// Synthetic dataset inputs.
    Data = 4,
    /// Train/test split draws.
    Split = 5,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for a purpose and its discriminators.
pub fn stream_id(purpose: Purpose, discriminators: &[u64]) -> u64 {
    discriminators
        .iter()
        .fold(purpose as u64, |h, &w| splitmix64(h ^ w))
}

/// One independent random stream. Not to be shared between concurrent consumers.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn keyed(seed: u64, purpose: Purpose, discriminators: &[u64]) -> Self {
        Self::new(seed, stream_id(purpose, discriminators))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
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
