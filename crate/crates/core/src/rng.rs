//! Hierarchical seed derivation.
//!
//! A master seed fans out into one seed per trial, and each trial fans out
//! into independent streams keyed by [`Stream`]. Every protocol step draws
//! from its own stream, so adding randomness to one step (for example the
//! singlet part of P3) never shifts the draws seen by another step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64-style mixing of a parent seed with a label.
pub fn mix(parent: u64, label: u64) -> u64 {
    let mut z = parent ^ label.wrapping_add(1).wrapping_mul(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Labels for the per-step child streams of a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Choice = 1,
    BobPrepare = 2,
    AlicePrepare = 3,
    AliceCommit = 4,
    BobRandomize = 5,
    CheckPhase = 6,
    AliceMeasure = 7,
    BobMeasureNow = 8,
    AliceUnveil = 9,
    BobVerify = 10,
    Singlet = 11,
    SingletVerify = 12,
    Attack = 13,
    Steering = 14,
}

/// A node in the seed tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    /// The seed tree of trial `index` under master seed `master`.
    pub fn trial(master: u64, index: u64) -> Self {
        Self(mix(master, index))
    }

    pub fn seed(&self) -> u64 {
        self.0
    }

    pub fn child(&self, stream: Stream) -> SeedTree {
        SeedTree(mix(self.0, stream as u64))
    }

    pub fn rng(&self, stream: Stream) -> SimRng {
        SimRng::seed_from_u64(self.child(stream).0)
    }
}
