//! A pool of qubits addressed by stable handles.
//!
//! Protocol parties hold [`Qubit`] handles rather than registers, so a qubit
//! can move between parties while staying entangled with qubits held
//! elsewhere. Internally each qubit lives in a register of at most two
//! qubits; measurements split registers and Bell measurements on qubits from
//! different registers perform entanglement swapping, which keeps that bound.

use super::density::DensityMatrix;
use super::gate::{mat2_adjoint, Basis, Bb84State, Gate, Mat2, PauliBits, C0};
use super::register::{bell_pair, sample_index, BellState, Register};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Handle to a qubit inside a [`QuantumStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Qubit(usize);

impl Qubit {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Slot {
    reg: Register,
    members: Vec<Qubit>,
}

#[derive(Clone, Debug, Default)]
pub struct QuantumStore {
    slots: Vec<Option<Slot>>,
    location: Vec<(usize, usize)>,
}

impl QuantumStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.location.len()
    }

    pub fn is_empty(&self) -> bool {
        self.location.is_empty()
    }

    /// Adds a register; its qubits get fresh handles in register order.
    pub fn insert(&mut self, reg: Register) -> Vec<Qubit> {
        let slot = self.slots.len();
        let members: Vec<Qubit> = (0..reg.n_qubits())
            .map(|pos| {
                self.location.push((slot, pos));
                Qubit(self.location.len() - 1)
            })
            .collect();
        self.slots.push(Some(Slot { reg, members: members.clone() }));
        members
    }

    pub fn prepare(&mut self, state: Bb84State) -> Qubit {
        self.insert(state.register())[0]
    }

    pub fn bell_pair(&mut self) -> (Qubit, Qubit) {
        let q = self.insert(bell_pair());
        (q[0], q[1])
    }

    fn locate(&self, q: Qubit) -> Result<(usize, usize)> {
        self.location.get(q.0).copied().ok_or(Error::QubitOutOfRange { target: q.0, n_qubits: self.len() })
    }

    fn slot(&self, idx: usize) -> &Slot {
        self.slots[idx].as_ref().expect("live slot")
    }

    fn place(&mut self, idx: usize, slot: Slot) {
        for (pos, q) in slot.members.iter().enumerate() {
            self.location[q.0] = (idx, pos);
        }
        self.slots[idx] = Some(slot);
    }

    fn push_slot(&mut self, slot: Slot) {
        self.slots.push(None);
        let idx = self.slots.len() - 1;
        self.place(idx, slot);
    }

    pub fn apply(&mut self, q: Qubit, m: &Mat2) -> Result<()> {
        let (s, pos) = self.locate(q)?;
        let slot = self.slots[s].as_mut().expect("live slot");
        slot.reg = slot.reg.apply_matrix(m, pos)?;
        Ok(())
    }

    pub fn apply_gate(&mut self, q: Qubit, gate: Gate) -> Result<()> {
        self.apply(q, &gate.matrix())
    }

    /// Applies the pad `X^x Z^z`.
    pub fn encrypt(&mut self, q: Qubit, key: PauliBits) -> Result<()> {
        self.apply(q, &key.matrix())
    }

    /// Measurement in the basis given by the columns of `u`. The measured
    /// qubit ends up alone in its register.
    pub fn measure_in<R: Rng + ?Sized>(&mut self, q: Qubit, u: &Mat2, rng: &mut R) -> Result<u8> {
        let (s, pos) = self.locate(q)?;
        let slot = self.slot(s).clone();
        let (outcome, post) = slot.reg.measure_in(u, pos, rng)?;
        if slot.members.len() == 1 {
            self.place(s, Slot { reg: post, members: slot.members });
            return Ok(outcome);
        }
        // Post-measurement state is a product; factor it.
        let other_pos = 1 - pos;
        let rotated = post.apply_matrix(&mat2_adjoint(u), pos)?;
        let mut rest = [C0; 2];
        for (b, r) in rest.iter_mut().enumerate() {
            let idx = if pos == 0 { (outcome as usize) * 2 + b } else { b * 2 + outcome as usize };
            *r = rotated.amplitudes()[idx];
        }
        let measured = Register::normalized(1, &[u[0][outcome as usize], u[1][outcome as usize]]);
        self.place(s, Slot { reg: measured, members: vec![q] });
        self.push_slot(Slot {
            reg: Register::normalized(1, &rest),
            members: vec![slot.members[other_pos]],
        });
        Ok(outcome)
    }

    pub fn measure<R: Rng + ?Sized>(&mut self, q: Qubit, basis: Basis, rng: &mut R) -> Result<u8> {
        self.measure_in(q, &basis.unitary(), rng)
    }

    /// Two-outcome projective test "is the qubit in the pure state `psi`?".
    pub fn check<R: Rng + ?Sized>(&mut self, q: Qubit, psi: &Register, rng: &mut R) -> Result<bool> {
        if psi.n_qubits() != 1 {
            return Err(Error::DimensionMismatch { expected: 2, actual: psi.dim() });
        }
        let a = psi.amplitudes();
        // Columns: psi and its orthogonal complement.
        let u: Mat2 = [[a[0], -a[1].conj()], [a[1], a[0].conj()]];
        Ok(self.measure_in(q, &u, rng)? == 0)
    }

    pub fn check_bb84<R: Rng + ?Sized>(&mut self, q: Qubit, state: Bb84State, rng: &mut R) -> Result<bool> {
        Ok(self.measure_in(q, &state.preparation(), rng)? == 0)
    }

    /// Bell measurement of the ordered pair `(a, b)`. Afterwards `a` and `b`
    /// share a register in the observed Bell state and any partners they
    /// were entangled with share the leftover state.
    pub fn bell_measure<R: Rng + ?Sized>(&mut self, a: Qubit, b: Qubit, rng: &mut R) -> Result<BellState> {
        if a == b {
            return Err(Error::InvalidState("Bell measurement needs two distinct qubits".into()));
        }
        let (sa, _) = self.locate(a)?;
        let (sb, _) = self.locate(b)?;
        // Joint state over the qubits of both registers.
        let (amps, order) = if sa == sb {
            let s = self.slot(sa);
            (s.reg.amplitudes().to_vec(), s.members.clone())
        } else {
            let (x, y) = (self.slot(sa), self.slot(sb));
            let mut amps = Vec::with_capacity(x.reg.dim() * y.reg.dim());
            for p in x.reg.amplitudes() {
                for r in y.reg.amplitudes() {
                    amps.push(p * r);
                }
            }
            let mut order = x.members.clone();
            order.extend(&y.members);
            (amps, order)
        };
        let k = order.len();
        let pa = order.iter().position(|&q| q == a).expect("member");
        let pb = order.iter().position(|&q| q == b).expect("member");
        let rest: Vec<usize> = (0..k).filter(|&p| p != pa && p != pb).collect();
        let bit = |idx: usize, pos: usize| (idx >> (k - 1 - pos)) & 1;

        let mut leftovers = Vec::with_capacity(4);
        let mut probs = Vec::with_capacity(4);
        for bell in BellState::ALL {
            let beta = bell.amplitudes();
            let mut v = vec![C0; 1 << rest.len()];
            for (idx, amp) in amps.iter().enumerate() {
                let coeff = beta[bit(idx, pa) * 2 + bit(idx, pb)].conj();
                let mut l = 0;
                for &p in &rest {
                    l = (l << 1) | bit(idx, p);
                }
                v[l] += coeff * amp;
            }
            probs.push(v.iter().map(Complex64::norm_sqr).sum::<f64>());
            leftovers.push(v);
        }
        let choice = sample_index(&probs, rng);
        let outcome = BellState::ALL[choice];

        self.place(sa, Slot { reg: outcome.register(), members: vec![a, b] });
        let rest_members: Vec<Qubit> = rest.iter().map(|&p| order[p]).collect();
        let left = (!rest_members.is_empty())
            .then(|| Slot { reg: Register::normalized(rest_members.len(), &leftovers[choice]), members: rest_members });
        match (sa != sb, left) {
            (true, Some(slot)) => self.place(sb, slot),
            (true, None) => self.slots[sb] = None,
            (false, Some(slot)) => self.push_slot(slot),
            (false, None) => {}
        }
        Ok(outcome)
    }

    /// Reduced state of a single qubit.
    pub fn reduced_density(&self, q: Qubit) -> Result<DensityMatrix> {
        let (s, pos) = self.locate(q)?;
        let slot = self.slot(s);
        let amps = slot.reg.amplitudes();
        if slot.members.len() == 1 {
            return Ok(DensityMatrix::from_pure(amps));
        }
        let mut m = nalgebra::DMatrix::zeros(2, 2);
        for r in 0..2 {
            for c in 0..2 {
                let mut acc = C0;
                for o in 0..2 {
                    let (ir, ic) = if pos == 0 { (r * 2 + o, c * 2 + o) } else { (o * 2 + r, o * 2 + c) };
                    acc += amps[ir] * amps[ic].conj();
                }
                m[(r, c)] = acc;
            }
        }
        Ok(DensityMatrix::from_raw(m))
    }

    /// The pure state of `q` if it is not entangled with anything.
    pub fn single_state(&self, q: Qubit) -> Result<Option<Register>> {
        let (s, _) = self.locate(q)?;
        let slot = self.slot(s);
        Ok((slot.members.len() == 1).then(|| slot.reg.clone()))
    }

    /// The joint state of two qubits sharing a register, ordered `(a, b)`.
    pub fn pair_state(&self, a: Qubit, b: Qubit) -> Result<Option<Register>> {
        let (sa, pa) = self.locate(a)?;
        let (sb, _) = self.locate(b)?;
        if sa != sb || a == b {
            return Ok(None);
        }
        let reg = self.slot(sa).reg.clone();
        if pa == 0 {
            return Ok(Some(reg));
        }
        let v = reg.amplitudes();
        Ok(Some(Register::normalized(2, &[v[0], v[2], v[1], v[3]])))
    }
}
