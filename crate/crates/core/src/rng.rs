//! Counter-based random substreams.
//!
//! Every random draw in a study is addressed by a [`StreamKey`]: the master
//! seed, the Monte-Carlo sample index and the purpose of the draw. The key
//! selects a ChaCha8 keystream (seed from the master seed, stream id from
//! index and slot), so the values a sample sees do not depend on which
//! thread evaluates it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct slots of the same sample never share
/// bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    DataIndex,
    NoiseVector,
    TimeA,
    TimeB,
}

impl Slot {
    fn id(self) -> u64 {
        match self {
            Slot::DataIndex => 0,
            Slot::NoiseVector => 1,
            Slot::TimeA => 2,
            Slot::TimeB => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub sample_index: u64,
    pub slot: Slot,
}

impl StreamKey {
    pub fn new(master_seed: u64, sample_index: u64, slot: Slot) -> Self {
        Self { master_seed, sample_index, slot }
    }

    /// The generator positioned at the start of this key's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        // 2^62 sample indices per master seed.
        rng.set_stream(self.sample_index.wrapping_mul(4) | self.slot.id());
        rng
    }
}

/// `count` uniform reals in [0, 1).
pub fn uniform(key: StreamKey, count: usize) -> Vec<f64> {
    let mut rng = key.rng();
    (0..count).map(|_| rng.random::<f64>()).collect()
}

/// A single uniform real in [lo, hi].
pub fn uniform_in(key: StreamKey, lo: f64, hi: f64) -> f64 {
    let u: f64 = key.rng().random();
    lo + (hi - lo) * u
}

/// Uniform index in `0..upper`. `upper` must be nonzero.
pub fn uniform_index(key: StreamKey, upper: usize) -> usize {
    key.rng().random_range(0..upper)
}

/// `n` independent standard normal draws.
pub fn standard_normal(key: StreamKey, n: usize) -> Vec<f64> {
    let mut rng = key.rng();
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}
