//! Seed-stream derivation.
//!
//! Every random matrix is drawn from its own ChaCha stream whose key is a
//! hash of `(master seed, role, trial index)`. Streams never overlap, so
//! trials can be sampled in any order or on any number of threads and still
//! produce bit-identical matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which matrix of a model a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    Weights = 1,
    Data = 2,
    Noise = 3,
    SurrogateWeights = 4,
    SurrogateData = 5,
    SpikeLeft = 6,
    SpikeRight = 7,
    Lanczos = 8,
    Trial = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of the stream for `role` in trial `trial` of an experiment.
pub fn derive_seed(master: u64, role: Role, trial: u64) -> u64 {
    let h = splitmix64(master ^ 0x6A09_E667_F3BC_C908);
    let h = splitmix64(h ^ (role as u64).wrapping_mul(0xA076_1D64_78BD_642F));
    splitmix64(h ^ trial.wrapping_mul(0xE703_7ED1_A0B4_28DB))
}

/// A generator for a single derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
