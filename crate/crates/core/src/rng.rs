//! Seed derivation for reproducible, schedule-independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for item `index` of a stream rooted at `seed`.
///
/// Distinct `(seed, index)` pairs give unrelated seeds, and nesting
/// (`derive(derive(s, i), j)`) does not collide with the flat layout.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Named sub-streams of a trial seed.
pub mod stream {
    pub const NOISE: u64 = 1;
    pub const PERMUTATIONS: u64 = 2;
    pub const AREA: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
}
