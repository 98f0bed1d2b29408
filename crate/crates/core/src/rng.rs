//! Seed handling.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded through
//! `SeedableRng::seed_from_u64`. Sub-streams (per instance, per restart, per
//! split) get their seed from [`derive_seed`], a SplitMix64 mix of the parent
//! seed and a path of integer salts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a path of salts.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(parent), |acc, &salt| splitmix64(acc ^ splitmix64(salt.wrapping_add(0x5DEE_CE66))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_depend_on_every_salt() {
        let a = derive_seed(7, &[0, 1]);
        assert_eq!(a, derive_seed(7, &[0, 1]));
        assert_ne!(a, derive_seed(7, &[1, 0]));
        assert_ne!(a, derive_seed(8, &[0, 1]));
        assert_ne!(a, derive_seed(7, &[0]));
    }

    #[test]
    fn splitmix_reference_value() {
        // First output of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
