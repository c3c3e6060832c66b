//! Simulation of quantum bit-commitment protocols built on BB84 states.
//!
//! * [`qcore`]: few-qubit registers, a handle-based qubit store, density
//!   matrices and fidelity.
//! * [`steering`]: ensembles, purifications and the steering attack that
//!   lets a committer switch between two ensembles with equal densities.
//! * [`protocol_p1`]: the decoy-padded commitment P1 and its attacks.
//! * [`protocol_p2p3`]: the randomised-evidence commitment P2, its
//!   singlet-certified extension P3, and the Bell-measurement attack.
//! * [`analysis`]: binary entropy, the fidelity bound, the combinatorial
//!   model and exact mixture oracles.
//! * [`harness`]: configurable Monte Carlo experiments with transcripts.

pub mod analysis;
pub mod classical;
pub mod error;
pub mod harness;
pub mod protocol_p1;
pub mod protocol_p2p3;
pub mod qcore;
pub mod rng;
pub mod steering;

pub use classical::{FailureReason, Permutation, Verdict};
pub use error::{Error, Result};
pub use qcore::{
    bell_measure, bell_pair, fidelity, prepare_bb84, Basis, Bb84State, BellState, DensityMatrix, Gate,
    PauliBits, PauliKey, QuantumStore, Qubit, Register,
};
pub use rng::{SeedTree, SimRng, Stream};
