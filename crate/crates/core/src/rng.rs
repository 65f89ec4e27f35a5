//! Named random substreams.
//!
//! Every stochastic mechanism draws from its own ChaCha stream derived from
//! the master seed, so switching one mechanism off never shifts the draws seen
//! by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mechanisms that own an independent stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Population = 1,
    Seeding = 2,
    Contacts = 3,
    Transmission = 4,
    Progression = 5,
    Testing = 6,
    Tracing = 7,
    Policy = 8,
    Replay = 9,
    Init = 10,
    Search = 11,
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Deterministically mixes `label` into `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
