//! Counter-based seed derivation.
//!
//! Every random stream in the simulator is a ChaCha8 generator keyed by a
//! 64-bit seed derived from the master seed and a tuple of counters (round,
//! client id, epoch, ...). Streams never share state, so the order in which
//! clients are processed cannot change any drawn value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep derived seeds for different purposes disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Tag {
    Centers = 1,
    TrainSamples = 2,
    TestSamples = 3,
    Partition = 4,
    Sampling = 5,
    ClientTrain = 6,
    Shuffle = 7,
    Poison = 8,
    EdgePool = 9,
    DpNoise = 10,
    Init = 11,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a tag and a list of counters into a new seed.
pub fn derive(seed: u64, tag: Tag, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(tag as u64));
    for &c in counters {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

pub fn stream(seed: u64, tag: Tag, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, counters))
}
