//! Deterministic stream splitting.
//!
//! Every trajectory, replica or chain draws from its own ChaCha8 stream keyed
//! by `(master_seed, stream_index)`, so results do not depend on how work is
//! scheduled across threads. The key is the SplitMix64 finalizer applied to
//! `master_seed ^ (stream_index · 0x9E37_79B9_7F4A_7C15)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Identifies the stream a result was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub master_seed: u64,
    pub index: u64,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix_seed(master_seed, index))
}

impl StreamId {
    pub fn rng(&self) -> StreamRng {
        stream(self.master_seed, self.index)
    }
}

pub(crate) fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}
