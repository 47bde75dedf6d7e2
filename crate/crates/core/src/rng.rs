//! Deterministic per-round random streams.
//!
//! Every simulated round draws from its own ChaCha8 stream whose 64-bit seed
//! is
//!
//! ```text
//! seed = splitmix64(splitmix64(splitmix64(master) ^ experiment) ^ round)
//! ```
//!
//! where `splitmix64` is the finaliser of Steele, Lea and Flood's SplitMix64
//! generator (`x += 0x9e3779b97f4a7c15`, then two xor-shift-multiply steps).
//! The stream is `ChaCha8Rng::seed_from_u64(seed)`. Rounds can therefore be
//! run in any order or on any number of threads with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the simulator.
pub type RandomStream = ChaCha8Rng;

/// Experiment identifiers used by the canned runs, so that different
/// experiments sharing a master seed do not share streams.
pub mod experiment {
    pub const SIMULATE: u64 = 0x5349_4d55;
    pub const FIG3_SQSV: u64 = 0x4633_5351;
    pub const FIG3_DQSV: u64 = 0x4633_4451;
    pub const FIG4_SQSV: u64 = 0x4634_5351;
    pub const FIG4_DQSV: u64 = 0x4634_4451;
    pub const FIG5: u64 = 0x4635_0000;
    pub const SWEEP: u64 = 0x5357_4550;
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, experiment: u64, round: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ experiment) ^ round)
}

pub fn round_stream(master: u64, experiment: u64, round: u64) -> RandomStream {
    RandomStream::seed_from_u64(stream_seed(master, experiment, round))
}

/// Master seed and experiment id from which per-round streams derive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedPlan {
    pub master: u64,
    pub experiment: u64,
}

impl SeedPlan {
    pub fn new(master: u64, experiment: u64) -> Self {
        Self { master, experiment }
    }

    pub fn stream(&self, round: u64) -> RandomStream {
        round_stream(self.master, self.experiment, round)
    }

    /// A plan for an independent sub-experiment (e.g. one grid point).
    pub fn child(&self, index: u64) -> SeedPlan {
        SeedPlan {
            master: self.master,
            experiment: splitmix64(self.experiment ^ splitmix64(index.wrapping_add(1))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of SplitMix64 seeded with 0: state advances by the
        // golden gamma before mixing.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(0x9e37_79b9_7f4a_7c15), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut s1 = round_stream(42, 1, 7);
        let mut s2 = round_stream(42, 1, 7);
        let mut s3 = round_stream(42, 1, 8);
        let x1: u64 = s1.random();
        assert_eq!(x1, s2.random::<u64>());
        assert_ne!(x1, s3.random::<u64>());
        let p = SeedPlan::new(42, 1);
        assert_ne!(p.child(0), p.child(1));
    }
}
