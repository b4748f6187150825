//! Seeded random sources and deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for task `index` of stream `stream`.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    mix64(mix64(mix64(base) ^ stream as u64) ^ index)
}

/// Named seed streams so that different protocol stages never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    BetaData = 1,
    BetaSplit = 2,
    BetaInit = 3,
    MemberData = 4,
    MemberSplit = 5,
    MemberInit = 6,
    SharedTest = 7,
    HoldOut = 8,
    /// Per-scenario synthetic draws.
    Scenario = 9,
}
