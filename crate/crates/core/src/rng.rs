//! Counter-based random streams.
//!
//! Every clock and every walk is a pure function of
//! `(master seed, tag, source, particle index)`, read through a ChaCha8
//! block function with random access by word position. Two simulations on
//! different source windows therefore read identical streams for every
//! source they share, which is what makes the natural coupling hold by
//! construction.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::lattice::{Direction, Source, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamTag {
    Clock,
    Walk,
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub tag: StreamTag,
    pub source: Source,
    /// Particle index `j >= 1` for walks, `0` for clocks.
    pub particle_index: u32,
}

/// Builds the key for `(master, tag, z, j)`.
pub fn derive_key(master: u64, tag: StreamTag, z: Source, j: u32) -> StreamKey {
    StreamKey {
        master_seed: master,
        tag,
        source: z,
        particle_index: j,
    }
}

impl StreamKey {
    pub fn clock(master: u64, z: Source) -> Self {
        derive_key(master, StreamTag::Clock, z, 0)
    }

    pub fn walk(master: u64, z: Source, j: u32) -> Self {
        derive_key(master, StreamTag::Walk, z, j)
    }

    /// 256-bit ChaCha key. The packing is injective: every field occupies
    /// its own byte range, hyperplane coordinates are stored in full.
    pub fn seed_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        out[8] = match self.tag {
            StreamTag::Clock => 1,
            StreamTag::Walk => 2,
        };
        out[9] = self.source.dim() as u8;
        let raw = self.source.site();
        for axis in 1..MAX_DIM {
            let c = raw.raw()[axis];
            let at = 10 + 4 * (axis - 1);
            out[at..at + 4].copy_from_slice(&c.to_le_bytes());
        }
        out[22..26].copy_from_slice(&self.particle_index.to_le_bytes());
        out
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.seed_bytes())
    }

    /// 64-bit word `i` of the stream.
    pub fn word(&self, i: u64) -> u64 {
        let mut rng = self.rng();
        rng.set_word_pos(2 * i as u128);
        rng.next_u64()
    }
}

/// Maps a 64-bit word to a uniform in the open interval `(0, 1)`.
#[inline]
pub fn unit_open(w: u64) -> f64 {
    ((w >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Successive tops of an intensity-1 Poisson clock restricted to `(0, t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockTops {
    pub times: Vec<f64>,
    pub horizon: f64,
}

impl ClockTops {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Tops of the clock stream `key` in `(0, t]`.
///
/// Inter-arrival times are `-ln U_i` with `U_i` taken from word `i`, so the
/// sequence for a larger horizon extends the one for a smaller horizon.
pub fn clock_tops(key: &StreamKey, t: f64) -> ClockTops {
    assert_eq!(key.tag, StreamTag::Clock, "clock_tops needs a clock key");
    let mut times = Vec::new();
    if t > 0.0 {
        let mut rng = key.rng();
        let mut now = 0.0f64;
        loop {
            now += -unit_open(rng.next_u64()).ln();
            if now > t {
                break;
            }
            times.push(now);
        }
    }
    ClockTops { times, horizon: t }
}

/// Number of clock tops of `z` in `(0, t]`.
pub fn clock_count(master: u64, z: Source, t: f64) -> usize {
    clock_tops(&StreamKey::clock(master, z), t).len()
}

/// Anything that yields walk steps one at a time.
pub trait StepSource {
    fn next_step(&mut self) -> Direction;
}

#[derive(Debug, Clone, Copy)]
struct StepLayout {
    directions: u64,
    /// Bits per packed step; `0` means one 64-bit word per step.
    bits: u32,
    per_word: u64,
}

impl StepLayout {
    fn for_dim(dim: usize) -> Self {
        let directions = 2 * dim as u64;
        if directions.is_power_of_two() {
            let bits = directions.trailing_zeros();
            StepLayout {
                directions,
                bits,
                per_word: (64 / bits) as u64,
            }
        } else {
            StepLayout {
                directions,
                bits: 0,
                per_word: 1,
            }
        }
    }

    #[inline]
    fn extract(&self, word: u64, slot: u64) -> Direction {
        let code = if self.bits == 0 {
            // multiply-high; bias below 2^-61 for six directions
            ((word as u128 * self.directions as u128) >> 64) as u8
        } else {
            ((word >> (slot * self.bits as u64)) & (self.directions - 1)) as u8
        };
        Direction::from_code(code)
    }
}

/// Sequential reader over a walk stream; step `i` is a pure function of
/// `(key, i)` whatever the starting offset.
#[derive(Debug, Clone)]
pub struct WalkStream {
    rng: ChaCha8Rng,
    layout: StepLayout,
    word: u64,
    slot: u64,
}

impl WalkStream {
    pub fn new(key: &StreamKey) -> Self {
        Self::at(key, 0)
    }

    /// Stream positioned so that the next step returned is step `start`.
    pub fn at(key: &StreamKey, start: u64) -> Self {
        assert_eq!(key.tag, StreamTag::Walk, "walk streams need a walk key");
        let layout = StepLayout::for_dim(key.source.dim());
        let mut rng = key.rng();
        let word_index = start / layout.per_word;
        rng.set_word_pos(2 * word_index as u128);
        let word = rng.next_u64();
        WalkStream {
            rng,
            layout,
            word,
            slot: start % layout.per_word,
        }
    }
}

impl StepSource for WalkStream {
    #[inline]
    fn next_step(&mut self) -> Direction {
        if self.slot == self.layout.per_word {
            self.word = self.rng.next_u64();
            self.slot = 0;
        }
        let d = self.layout.extract(self.word, self.slot);
        self.slot += 1;
        d
    }
}

/// Random access to step `i` of a walk stream.
pub fn walk_step(key: &StreamKey, i: u64) -> Direction {
    let layout = StepLayout::for_dim(key.source.dim());
    let w = key.word(i / layout.per_word);
    layout.extract(w, i % layout.per_word)
}

/// Seed of replicate `i` under `master`. Replicates of an experiment are
/// independent simulations; this is the only place their seeds come from.
pub fn replicate_seed(master: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(0x5eed);
    rng.set_word_pos(2 * i as u128);
    rng.next_u64()
}

/// Parses a 64-bit seed written in decimal or `0x` hexadecimal.
pub fn parse_seed(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let parsed = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        t.parse::<u64>()
    };
    parsed.map_err(|e| format!("invalid seed `{}`: {}", s, e))
}
