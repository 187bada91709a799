//! Named random streams expanded from one master seed.
//!
//! Every stream is a ChaCha keystream under the master seed with its own
//! 64-bit stream id, so streams never overlap and drawing from one leaves
//! the others untouched. Indexed substreams (one per evaluation episode,
//! one per Monte-Carlo rollout) live in the low bits of the stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Explore = 3,
    Sample = 4,
    Eval = 5,
    Rollout = 6,
}

const INDEX_BITS: u32 = 56;

/// The stream named `stream` under `master_seed`.
pub fn stream(master_seed: u64, stream: Stream) -> StreamRng {
    substream(master_seed, stream, 0)
}

/// Substream `index` of `stream`; index 0 is the stream itself.
pub fn substream(master_seed: u64, stream: Stream, index: u64) -> StreamRng {
    assert!(index < 1 << INDEX_BITS, "substream index {index} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((stream as u64) << INDEX_BITS) | index);
    rng
}
