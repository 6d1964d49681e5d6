//! Hierarchical, counter-based random streams.
//!
//! A [`Stream`] is a 64-bit key. Children are derived by mixing the parent key with
//! an index, so the stream used for particle `i` of iteration `t` depends only on
//! `(seed, t, i)` and never on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator handed to every sampling routine.
pub type ChainRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream(u64);

/// Reserved child indices. Particle streams use indices `0..N`.
pub(crate) const AUX_STREAM: u64 = u64::MAX;
pub(crate) const SELECT_STREAM: u64 = u64::MAX - 1;
pub(crate) const ACCEPT_STREAM: u64 = u64::MAX - 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(splitmix64(seed))
    }

    pub fn key(self) -> u64 {
        self.0
    }

    pub fn child(self, index: u64) -> Stream {
        Stream(splitmix64(
            self.0 ^ splitmix64(index.wrapping_mul(0xD1B5_4A32_D192_ED03)),
        ))
    }

    pub fn rng(self) -> ChainRng {
        ChainRng::seed_from_u64(self.0)
    }
}
