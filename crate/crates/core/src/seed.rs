//! Counter-based seed derivation.
//!
//! Every random draw in the crate starts from a `u64` seed. Sub-seeds are
//! derived by hashing the parent seed together with integer labels, so the
//! stream for a given label never depends on how many other streams exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Seed = u64;

/// The generator used for every stochastic stage.
pub type SimRng = ChaCha8Rng;

pub fn rng(seed: Seed) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `parent` with an ordered list of labels.
pub fn derive(parent: Seed, labels: &[u64]) -> Seed {
    labels
        .iter()
        .fold(splitmix64(parent), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}
