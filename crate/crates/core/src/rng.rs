//! Seed plumbing. Every random stream in a run is a ChaCha8 generator whose
//! seed is derived from a master seed and a path of integer labels, so that
//! results are reproducible regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels used when deriving per-trial sub-seeds.
pub mod stream {
    pub const SIGNAL: u64 = 1;
    pub const CODEBOOK: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SELECTION: u64 = 4;
    pub const BASELINE_SELECTION: u64 = 5;
    pub const FIXED_CODEBOOK: u64 = 6;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `master` together with an ordered list of labels.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &label| {
        splitmix64(acc ^ splitmix64(label.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
