//! Deterministic random streams.
//!
//! Every Monte Carlo cell (a grid point, a trial, a draw batch) gets its own
//! ChaCha8 stream whose seed is derived from the master seed and a path of
//! integer keys. Derivation is a SplitMix64 chain, so a stream depends only on
//! its own key path: adding grid points or trials leaves existing streams
//! untouched, and results do not depend on how cells are scheduled across
//! workers.
//!
//! Grid points are keyed by the bit pattern of their value, not their index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Domain tags used as the first key of a stream path.
pub mod tag {
    pub const DICTIONARY: u64 = 0x4449_4354;
    pub const SUPPORT: u64 = 0x5355_5050;
    pub const CALIBRATION: u64 = 0x4341_4c49;
    pub const STATDIM: u64 = 0x5354_4154;
    pub const ROTATION: u64 = 0x524f_5441;
    pub const SPECTRA: u64 = 0x5350_4543;
    pub const GHOST: u64 = 0x4748_4f53;
    pub const COEFFICIENTS: u64 = 0x434f_4546;
    pub const WIDTH: u64 = 0x5749_4454;
    pub const STRUCTURE: u64 = 0x5354_5255;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream at `path` below `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &key| splitmix64(acc ^ splitmix64(key)))
}

pub fn stream(master: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
