//! Few-qubit state simulation: registers, gates, measurements, density
//! matrices and fidelity.

pub mod density;
pub mod gate;
pub mod register;
pub mod store;

pub use density::{fidelity, DensityMatrix};
pub use gate::{Basis, Bb84State, Gate, Mat2, PauliBits, PauliKey};
pub use register::{bell_measure, bell_pair, prepare_bb84, BellState, Register};
pub use store::{QuantumStore, Qubit};
