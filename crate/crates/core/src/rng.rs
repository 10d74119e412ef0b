//! Deterministic random streams.
//!
//! Every trial owns a single seed; independent streams are split off by
//! purpose so that toggling one impairment never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag for a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Channel = 1,
    Timing = 2,
    PhaseNoise = 3,
    Noise = 4,
    Data = 5,
    Sequence = 6,
    Aux = 7,
}

/// Mixes a base seed with a trial index (splitmix64 finalizer).
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    let mut z = base ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for `stream` of the trial seeded with `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    stream_rng_indexed(seed, stream, 0)
}

/// Like [`stream_rng`], with an extra sub-index (e.g. link direction).
pub fn stream_rng_indexed(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | (index & 0xFFFF_FFFF));
    rng
}
