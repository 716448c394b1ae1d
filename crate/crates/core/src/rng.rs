//! Counter-based random streams.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream keyed by
//! `(seed, run, time, panel, purpose)`. The global seed is the cipher key
//! and the remaining fields are packed into the 64-bit stream id, so two
//! processes that agree on the key consume identical randomness no matter
//! in which order they run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Anchor-specific streams add the anchor's
/// local index to [`Purpose::AnchorPredict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Synthesis,
    Init,
    AgentPredict,
    InterPanel,
    Resample,
    AnchorPredict(u8),
}

impl Purpose {
    fn tag(self) -> u8 {
        match self {
            Purpose::Synthesis => 0,
            Purpose::Init => 1,
            Purpose::AgentPredict => 2,
            Purpose::InterPanel => 3,
            Purpose::Resample => 4,
            Purpose::AnchorPredict(k) => 16u8.saturating_add(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub run: u16,
    pub time: u32,
    pub panel: u16,
}

impl StreamKey {
    pub fn new(seed: u64, run: u16, time: u32, panel: u16) -> Self {
        Self {
            seed,
            run,
            time,
            panel,
        }
    }

    /// Stream id layout: run(16) | time(24) | panel(16) | purpose(8).
    fn stream_id(&self, purpose: Purpose) -> u64 {
        ((self.run as u64) << 48)
            | (((self.time as u64) & 0xFF_FFFF) << 24)
            | ((self.panel as u64) << 8)
            | purpose.tag() as u64
    }

    pub fn rng(&self, purpose: Purpose) -> StreamRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id(purpose));
        rng
    }
}
