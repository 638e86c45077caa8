// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The one generator used across the crate: ChaCha8 keyed from a 64-bit seed
/// via `SeedableRng::seed_from_u64`. Output is platform independent.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a stream label into a seed (SplitMix64 finalizer over `seed ^ label`)
/// so that per-task sub-streams never overlap trivially.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = (seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
