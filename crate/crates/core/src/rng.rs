//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed; the
//! 64-bit ChaCha stream id selects the substream. Path `i` of an ensemble
//! always reads substream `i`, so results do not depend on evaluation order
//! or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Master seed from which independent substreams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed(pub u64);

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    /// Independent generator for the given substream index.
    pub fn substream(self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }

    /// Derived master seed for a separate family of substreams, e.g. the
    /// inner Monte-Carlo budget of an experiment.
    pub fn child(self, tag: u64) -> StreamSeed {
        // splitmix64 finaliser
        let mut z = self.0 ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        StreamSeed(z ^ (z >> 31))
    }
}
