//! Reproducible random streams.
//!
//! Every Monte Carlo loop in this crate draws from a [`SimRng`] (ChaCha with
//! 8 rounds) whose seed is derived from a master seed plus a path of integer
//! labels (`tag`, replication index, sprint length, ...). Derivation is a
//! SplitMix64 fold, so the stream for replication `i` depends only on
//! `(master, path)` and never on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for all simulation work.
pub type SimRng = ChaCha8Rng;

/// Labels that keep sub-streams of one master seed apart.
pub mod tag {
    pub const PHASE_ONE: u64 = 0x5031;
    pub const PHASE_TWO: u64 = 0x5032;
    pub const SELECT_K: u64 = 0x4b53;
    pub const PRELIMINARY: u64 = 0x4d4a;
    pub const TUNE: u64 = 0x5455;
    pub const CALIBRATE: u64 = 0x4341;
    pub const REFERENCE: u64 = 0x5245;
    pub const BOOTSTRAP: u64 = 0x4253;
    pub const CLASSICAL: u64 = 0x434c;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `master`, producing an independent 64-bit sub-seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

/// Generator for the sub-stream `(master, path)`.
pub fn stream_rng(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}
