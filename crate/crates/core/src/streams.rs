//! Seeded, independent random substreams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the run seed
//! and a stream number, so trials and draws can be regenerated individually
//! and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a per-trial substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Theta = 0,
    Xi = 1,
    Bernoulli = 2,
    Aux = 3,
}

const PURPOSES: u64 = 4;

/// Raw substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Substream for `purpose` within trial (or level) `index`.
pub fn trial_stream(seed: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    substream(seed, index.wrapping_mul(PURPOSES).wrapping_add(purpose as u64))
}

/// Derives a decorrelated seed for the `index`-th member of a family of runs.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
