//! Seeded random streams. One root seed fans out into independent named
//! streams so that, for example, changing the shuffle order leaves weight
//! initialisation untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SaversRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Dropout = 3,
    Shuffle = 4,
    Scene = 5,
}

pub fn stream_rng(root_seed: u64, stream: Stream) -> SaversRng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream as u64);
    rng
}

/// Derives a sub-seed, e.g. one per generated chip.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over the combined value
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
