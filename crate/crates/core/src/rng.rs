//! Seed derivation for reproducible parallel streams.
//!
//! Every random stream in the pipeline is keyed by a master seed plus a
//! path of small integers (subproblem, coordinate, role). Streams never
//! depend on scheduling order, so results are identical for any worker
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x5EED_C0DE;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

// Role tags used as the last path element.
pub(crate) const ROLE_SKETCH_X: u64 = 1;
pub(crate) const ROLE_SKETCH_Y: u64 = 2;
pub(crate) const ROLE_PROJECTIONS: u64 = 3;
pub(crate) const ROLE_QHAT_X: u64 = 4;
pub(crate) const ROLE_QHAT_Y: u64 = 5;
pub(crate) const ROLE_POST_SELECT: u64 = 6;
pub(crate) const ROLE_NORMS: u64 = 7;
