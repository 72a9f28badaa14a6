//! Counter-based randomness.
//!
//! Every random draw in the crate is addressed by `(master_seed, stream_id, draw_index)`.
//! The triple is mixed into a ChaCha8 key, so a draw never depends on how many other
//! draws happened before it or on which worker thread performed them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Well-known stream identifiers.
pub mod streams {
    pub const PROTOTYPES: u64 = 1;
    pub const TRAIN: u64 = 2;
    /// Evaluation cells use `EVAL_BASE + cell_index`.
    pub const EVAL_BASE: u64 = 0x100;
    pub const DATASET_DUMP: u64 = 3;
    pub const ADVERSARIAL: u64 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Generator for the `draw_index`-th draw of this stream.
    pub fn draw(&self, draw_index: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let words = [
            splitmix64(self.master_seed),
            splitmix64(self.stream_id ^ 0x9e37_79b9_7f4a_7c15),
            splitmix64(draw_index.wrapping_add(0xd1b5_4a32_d192_ed03)),
            splitmix64(self.master_seed ^ self.stream_id.rotate_left(17) ^ draw_index.rotate_left(41)),
        ];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// A sub-stream, e.g. one per evaluation cell.
    pub fn substream(&self, offset: u64) -> Self {
        Self::new(self.master_seed, self.stream_id.wrapping_add(offset))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
