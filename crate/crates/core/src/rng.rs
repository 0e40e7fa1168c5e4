//! Deterministic random substreams.
//!
//! Every random draw in a run comes from a generator keyed by
//! `(seed, purpose, iteration, index)`, so results do not depend on which
//! thread evaluates which offspring or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed to oracles, samplers and rollouts.
pub type Substream = ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Direction = 2,
    Offspring = 3,
    Trial = 4,
    Surrogate = 5,
    Audit = 6,
    Warmup = 7,
    Pilot = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the substream for `(seed, purpose, iteration, index)`.
pub fn substream(seed: u64, purpose: Purpose, iteration: u64, index: u64) -> Substream {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ purpose as u64);
    h = splitmix64(h ^ iteration);
    h = splitmix64(h ^ index);
    ChaCha8Rng::seed_from_u64(h)
}
