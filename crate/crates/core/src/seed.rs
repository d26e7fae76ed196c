//! Counter-based seed derivation.
//!
//! Every random stream in the toolkit is keyed by a tuple of integers mixed
//! through SplitMix64, so a stream never depends on the order in which other
//! streams were created. Sweeps can therefore run on any number of workers and
//! still produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default base seed used by the CLI when none is given.
pub const DEFAULT_BASE_SEED: u64 = 20_240_611;

/// The SplitMix64 finaliser.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of counters into one 64-bit seed.
pub fn mix(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Stream tags keep seeds for different purposes disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Member = 1,
    Validation = 2,
    Subset = 3,
    Init = 4,
    Shuffle = 5,
    Cell = 6,
}

pub fn derive(base: u64, stream: Stream, parts: &[u64]) -> u64 {
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(stream as u64);
    all.extend_from_slice(parts);
    mix(base, &all)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
