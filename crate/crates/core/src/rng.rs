//! Named, independent random streams.
//!
//! Every stage draws from its own ChaCha stream whose seed is a hash of
//! `(run seed, stage, index)`. Toggling one stage therefore never shifts the
//! numbers another stage sees. [`CountingRng`] records how many words each
//! stream handed out so reports can prove that isolation.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Pipeline stages that own a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Data,
    Teachers,
    SamplerNoise,
    SamplerBatch,
    Student,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Data => 0x6461_7461,
            Stage::Teachers => 0x7465_6163,
            Stage::SamplerNoise => 0x6e6f_6973,
            Stage::SamplerBatch => 0x6261_7463,
            Stage::Student => 0x7374_7564,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Teachers => "teachers",
            Stage::SamplerNoise => "sampler-noise",
            Stage::SamplerBatch => "sampler-batch",
            Stage::Student => "student",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Identifies one stream: the derived 64-bit seed for `(seed, stage, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamId(pub u64);

impl StreamId {
    pub fn derive(seed: u64, stage: Stage, index: u64) -> Self {
        StreamId(splitmix64(splitmix64(splitmix64(seed) ^ stage.tag()) ^ index))
    }

    pub fn rng(self) -> CountingRng {
        CountingRng {
            id: self,
            inner: ChaCha8Rng::seed_from_u64(self.0),
            words: 0,
        }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// A ChaCha8 stream that counts the 32-bit words it produced.
#[derive(Debug, Clone)]
pub struct CountingRng {
    id: StreamId,
    inner: ChaCha8Rng,
    words: u64,
}

impl CountingRng {
    pub fn new(seed: u64, stage: Stage, index: u64) -> Self {
        StreamId::derive(seed, stage, index).rng()
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Number of 32-bit words drawn so far.
    pub fn words_drawn(&self) -> u64 {
        self.words
    }
}

impl RngCore for CountingRng {
    fn next_u32(&mut self) -> u32 {
        self.words += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.words += 2;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.words += dst.len().div_ceil(4) as u64;
        self.inner.fill_bytes(dst)
    }
}

/// Usage record for one stream, as written into run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamUsage {
    pub stage: Stage,
    pub index: u64,
    pub id: StreamId,
    pub words: u64,
}

impl StreamUsage {
    pub fn of(stage: Stage, index: u64, rng: &CountingRng) -> Self {
        Self {
            stage,
            index,
            id: rng.id(),
            words: rng.words_drawn(),
        }
    }
}
