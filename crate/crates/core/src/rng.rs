//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the run
//! seed. The 64-bit stream id separates purposes and batches, and the word
//! position separates probes inside a batch, so each
//! `(seed, stream, probe)` triple maps to a disjoint block of the keystream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Words reserved per probe inside a stream.
const PROBE_STRIDE_BITS: u32 = 40;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn probe_stream(seed: u64, stream_id: u64, probe: u64) -> ChaCha8Rng {
    let mut rng = stream(seed, stream_id);
    rng.set_word_pos(u128::from(probe) << PROBE_STRIDE_BITS);
    rng
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Mixes two words into a new seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Stream ids by purpose. Oracle batches use ids below `POWER_START`.
pub(crate) const POWER_START: u64 = 1 << 62;
pub(crate) const GENERATOR: u64 = (1 << 62) + 1;
pub(crate) const VERIFY: u64 = (1 << 62) + 2;
