//! Pure states of one or two qubits.
//!
//! Amplitudes are indexed big-endian: qubit 0 is the leftmost tensor factor,
//! so for two qubits index `2*b0 + b1` holds the amplitude of `|b0 b1>`.

use super::density::DensityMatrix;
use super::gate::{mat2_adjoint, Basis, Bb84State, Gate, Mat2, PauliKey, C0, C1, CS};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Branches with probability below this are never sampled.
pub(crate) const NEGLIGIBLE: f64 = 1e-24;

/// Tolerance on the norm of externally supplied state vectors.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Register {
    n_qubits: usize,
    amps: [Complex64; 4],
}

impl Register {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis_state(n_qubits, 0)
    }

    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        check_width(n_qubits)?;
        if index >= 1 << n_qubits {
            return Err(Error::DimensionMismatch { expected: 1 << n_qubits, actual: index + 1 });
        }
        let mut amps = [C0; 4];
        amps[index] = C1;
        Ok(Self { n_qubits, amps })
    }

    /// Builds a register from 2 or 4 amplitudes whose norm is 1 within
    /// [`NORM_TOL`]; the vector is renormalised exactly.
    pub fn from_amplitudes(v: &[Complex64]) -> Result<Self> {
        let n_qubits = match v.len() {
            2 => 1,
            4 => 2,
            other => {
                return Err(Error::InvalidState(format!("{other} amplitudes; expected 2 or 4")))
            }
        };
        let norm_sqr: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("norm^2 = {norm_sqr}")));
        }
        Ok(Self::normalized(n_qubits, v))
    }

    /// Renormalises a nonzero vector of the right length.
    pub(crate) fn normalized(n_qubits: usize, v: &[Complex64]) -> Self {
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let mut amps = [C0; 4];
        for (dst, src) in amps.iter_mut().zip(v) {
            *dst = src / norm;
        }
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps[..self.dim()]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes().iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Register) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(self.amplitudes().iter().zip(other.amplitudes()).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|<self|other>|^2`.
    pub fn overlap_sq(&self, other: &Register) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn equals_up_to_phase(&self, other: &Register, tol: f64) -> bool {
        self.overlap_sq(other).map(|o| (o - 1.0).abs() <= tol).unwrap_or(false)
    }

    /// `self ⊗ other`; the result must fit in two qubits.
    pub fn tensor(&self, other: &Register) -> Result<Register> {
        let n = self.n_qubits + other.n_qubits;
        check_width(n)?;
        let mut amps = [C0; 4];
        for (i, a) in self.amplitudes().iter().enumerate() {
            for (j, b) in other.amplitudes().iter().enumerate() {
                amps[i * other.dim() + j] = a * b;
            }
        }
        Ok(Register { n_qubits: n, amps })
    }

    pub fn apply_matrix(&self, m: &Mat2, target: usize) -> Result<Register> {
        self.check_target(target)?;
        let mask = 1 << (self.n_qubits - 1 - target);
        let mut out = self.clone();
        for i in 0..self.dim() {
            if i & mask == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | mask]);
                out.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                out.amps[i | mask] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(out)
    }

    pub fn apply_1q(&self, gate: Gate, target: usize) -> Result<Register> {
        self.apply_matrix(&gate.matrix(), target)
    }

    /// Applies `X^x Z^z` to every qubit according to `key`.
    pub fn pauli_encrypt(&self, key: &PauliKey) -> Result<Register> {
        if key.len() != self.n_qubits {
            return Err(Error::KeyLengthMismatch { expected: self.n_qubits, actual: key.len() });
        }
        let mut out = self.clone();
        for (q, bits) in key.0.iter().enumerate() {
            out = out.apply_matrix(&bits.matrix(), q)?;
        }
        Ok(out)
    }

    /// Probability of `outcome` when measuring `target` in `basis`.
    pub fn outcome_probability(&self, basis: Basis, target: usize, outcome: u8) -> Result<f64> {
        let rotated = self.apply_matrix(&mat2_adjoint(&basis.unitary()), target)?;
        let mask = 1 << (self.n_qubits - 1 - target);
        let want = if outcome & 1 == 1 { mask } else { 0 };
        Ok((0..self.dim()).filter(|i| i & mask == want).map(|i| rotated.amps[i].norm_sqr()).sum())
    }

    /// Projective measurement of `target` in `basis`, returning the outcome
    /// and the collapsed state.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        basis: Basis,
        target: usize,
        rng: &mut R,
    ) -> Result<(u8, Register)> {
        self.measure_in(&basis.unitary(), target, rng)
    }

    /// Measurement in the orthonormal basis given by the columns of `u`.
    pub(crate) fn measure_in<R: Rng + ?Sized>(
        &self,
        u: &Mat2,
        target: usize,
        rng: &mut R,
    ) -> Result<(u8, Register)> {
        let rotated = self.apply_matrix(&mat2_adjoint(u), target)?;
        let mask = 1 << (self.n_qubits - 1 - target);
        let p1: f64 = (0..self.dim()).filter(|i| i & mask != 0).map(|i| rotated.amps[i].norm_sqr()).sum();
        let outcome = sample_binary(1.0 - p1, p1, rng);
        let mut kept = [C0; 4];
        for (i, slot) in kept.iter_mut().enumerate().take(self.dim()) {
            if (i & mask != 0) == (outcome == 1) {
                *slot = rotated.amps[i];
            }
        }
        let collapsed = Register::normalized(self.n_qubits, &kept[..self.dim()]);
        Ok((outcome, collapsed.apply_matrix(u, target)?))
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self.amplitudes())
    }

    fn check_target(&self, target: usize) -> Result<()> {
        if target >= self.n_qubits {
            return Err(Error::QubitOutOfRange { target, n_qubits: self.n_qubits });
        }
        Ok(())
    }
}

fn check_width(n_qubits: usize) -> Result<()> {
    if !(1..=2).contains(&n_qubits) {
        return Err(Error::InvalidState(format!("registers hold 1 or 2 qubits, not {n_qubits}")));
    }
    Ok(())
}

/// Draws 0 or 1 with the given (approximately normalised) weights. A uniform
/// variate is always consumed so stream usage does not depend on the state.
pub(crate) fn sample_binary<R: Rng + ?Sized>(p0: f64, p1: f64, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    if p1 < NEGLIGIBLE {
        0
    } else if p0 < NEGLIGIBLE {
        1
    } else if u * (p0 + p1) < p0 {
        0
    } else {
        1
    }
}

/// Draws an index with probability proportional to `weights`.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let total: f64 = weights.iter().filter(|w| **w >= NEGLIGIBLE).sum();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w < NEGLIGIBLE {
            continue;
        }
        acc += w;
        last = i;
        if u * total < acc {
            return i;
        }
    }
    last
}

/// The four Bell states on an ordered qubit pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] =
        [BellState::PhiPlus, BellState::PhiMinus, BellState::PsiPlus, BellState::PsiMinus];

    pub fn amplitudes(self) -> [Complex64; 4] {
        match self {
            BellState::PhiPlus => [CS, C0, C0, CS],
            BellState::PhiMinus => [CS, C0, C0, -CS],
            BellState::PsiPlus => [C0, CS, CS, C0],
            BellState::PsiMinus => [C0, CS, -CS, C0],
        }
    }

    pub fn register(self) -> Register {
        Register { n_qubits: 2, amps: self.amplitudes() }
    }
}

pub fn prepare_bb84(basis: Basis, bit: u8) -> Register {
    Bb84State::new(basis, bit).register()
}

impl Bb84State {
    pub fn register(self) -> Register {
        let a = self.amplitudes();
        Register { n_qubits: 1, amps: [a[0], a[1], C0, C0] }
    }
}

/// `(|00> + |11>)/sqrt(2)`.
pub fn bell_pair() -> Register {
    BellState::PhiPlus.register()
}

/// Bell-basis measurement of a two-qubit register.
pub fn bell_measure<R: Rng + ?Sized>(reg: &Register, rng: &mut R) -> Result<(BellState, Register)> {
    if reg.n_qubits != 2 {
        return Err(Error::DimensionMismatch { expected: 4, actual: reg.dim() });
    }
    let probs: Vec<f64> =
        BellState::ALL.iter().map(|b| b.register().overlap_sq(reg).unwrap_or(0.0)).collect();
    let k = sample_index(&probs, rng);
    Ok((BellState::ALL[k], BellState::ALL[k].register()))
}
