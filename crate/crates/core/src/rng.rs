//! Deterministic randomness.
//!
//! Every random quantity in the crate is a pure function of the experiment
//! seed plus a few integer coordinates. Sequential consumers get an
//! [`RngStream`] derived from `(seed, substream, entity)`. Draws that must line
//! up across system variants regardless of which of them are actually needed
//! (per-slot fading of a transmitter-receiver pair, Monte-Carlo samples) are
//! keyed directly by their coordinates through [`KeyedDraws`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::FadingModel;

/// Named independent substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Substream {
    Geometry,
    Arrivals,
    Fading,
    Access,
    /// Monte-Carlo estimation of success probabilities.
    Estimation,
}

impl Substream {
    pub fn id(self) -> u64 {
        match self {
            Substream::Geometry => 1,
            Substream::Arrivals => 2,
            Substream::Fading => 3,
            Substream::Access => 4,
            Substream::Estimation => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Substream::Geometry => "geometry",
            Substream::Arrivals => "arrivals",
            Substream::Fading => "fading",
            Substream::Access => "access",
            Substream::Estimation => "estimation",
        }
    }
}

impl fmt::Display for Substream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Substream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Substream::Geometry,
            Substream::Arrivals,
            Substream::Fading,
            Substream::Access,
            Substream::Estimation,
        ]
        .into_iter()
        .find(|sub| sub.name() == s)
        .ok_or_else(|| format!("unknown substream `{s}`"))
    }
}

/// SplitMix64 finalizer: a bijective avalanche mix of one word.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, word: u64) -> u64 {
    mix64(h ^ word.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x632b_e59b_d9b4_e019))
}

/// Hashes a key and three coordinates into a 64-bit seed.
#[inline]
pub fn keyed_hash(key: u64, a: u64, b: u64, c: u64) -> u64 {
    absorb(absorb(absorb(mix64(key), a), b), c)
}

/// Packs a realization index and a link index into one entity id.
#[inline]
pub fn link_entity(realization_id: u64, link: usize) -> u64 {
    (realization_id << 32) | link as u64
}

/// A sequential deterministic stream. Confined to one worker.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    /// Draws a fresh key for coordinate-addressed draws.
    pub fn fork_keyed(&mut self) -> KeyedDraws {
        KeyedDraws { key: self.inner.next_u64() }
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Builds the stream for `(seed, substream, entity)`. Identical inputs give
/// identical sequences; any differing coordinate gives an unrelated stream.
pub fn derive_stream(seed: u64, substream: Substream, entity: u64) -> RngStream {
    let word = keyed_hash(seed, substream.id(), entity, 0x5eed);
    RngStream { inner: ChaCha8Rng::seed_from_u64(word) }
}

/// Stateless draws addressed by three integer coordinates under a fixed key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedDraws {
    key: u64,
}

impl KeyedDraws {
    pub fn new(key: u64) -> Self {
        KeyedDraws { key }
    }

    pub fn for_substream(seed: u64, substream: Substream, entity: u64) -> Self {
        derive_stream(seed, substream, entity).fork_keyed()
    }

    /// Key of the `(a, b)` sequence. Position `c` of that sequence is the
    /// `c`-th output of a SplitMix64 generator seeded with the key.
    #[inline]
    pub fn stream_key(&self, a: u64, b: u64) -> u64 {
        keyed_hash(self.key, a, b, 0)
    }

    /// Uniform in `[0, 1)` at position `c` of the `(a, b)` sequence.
    #[inline]
    pub fn uniform(&self, a: u64, b: u64, c: u64) -> f64 {
        uniform_at(self.stream_key(a, b), c)
    }

    /// Unit-mean exponential at position `c` of the `(a, b)` sequence.
    #[inline]
    pub fn exponential(&self, a: u64, b: u64, c: u64) -> f64 {
        exponential_at(self.stream_key(a, b), c)
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Position `c` of the sequence with key `stream_key`, as a 53-bit uniform in `[0, 1)`.
#[inline]
pub fn uniform_at(stream_key: u64, c: u64) -> f64 {
    let z = mix64(stream_key.wrapping_add(c.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)));
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unit-mean exponential by inversion of [`uniform_at`], so every draw lies
/// in `(0, EXP_DRAW_MAX]`.
#[inline]
pub fn exponential_at(stream_key: u64, c: u64) -> f64 {
    (-(-uniform_at(stream_key, c)).ln_1p()).max(f64::MIN_POSITIVE)
}

/// Upper bound of [`exponential_at`]: `-ln(2^-53)` rounded up.
pub const EXP_DRAW_MAX: f64 = 36.737;

/// Per-slot fading gains between any transmitter and any receiver.
#[derive(Debug, Clone, Copy)]
pub struct FadingField {
    draws: KeyedDraws,
    model: FadingModel,
}

impl FadingField {
    pub fn new(seed: u64, realization_id: u64, model: FadingModel) -> Self {
        FadingField { draws: KeyedDraws::for_substream(seed, Substream::Fading, realization_id), model }
    }

    pub fn model(&self) -> FadingModel {
        self.model
    }

    /// Power gain from transmitter `tx` to receiver `rx` in `slot`.
    #[inline]
    pub fn gain(&self, tx: usize, rx: usize, slot: u64) -> f64 {
        self.gain_at(self.pair_key(tx, rx), slot)
    }

    /// Key of the gain sequence of one transmitter-receiver pair.
    #[inline]
    pub fn pair_key(&self, tx: usize, rx: usize) -> u64 {
        self.draws.stream_key(tx as u64, rx as u64)
    }

    /// Same as [`FadingField::gain`] given a cached [`FadingField::pair_key`].
    #[inline]
    pub fn gain_at(&self, pair_key: u64, slot: u64) -> f64 {
        match self.model {
            FadingModel::Rayleigh => exponential_at(pair_key, slot),
            FadingModel::None => 1.0,
        }
    }
}
