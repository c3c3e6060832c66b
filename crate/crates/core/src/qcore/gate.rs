//! Single-qubit gates, BB84 states and Pauli one-time-pad keys.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

/// A 2x2 complex matrix in row-major order.
pub type Mat2 = [[Complex64; 2]; 2];

pub(crate) const C0: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C1: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const CI: Complex64 = Complex64::new(0.0, 1.0);
pub(crate) const CS: Complex64 = Complex64::new(FRAC_1_SQRT_2, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    I,
    X,
    Y,
    Z,
    H,
}

impl Gate {
    pub const ALL: [Gate; 5] = [Gate::I, Gate::X, Gate::Y, Gate::Z, Gate::H];

    pub fn matrix(self) -> Mat2 {
        match self {
            Gate::I => [[C1, C0], [C0, C1]],
            Gate::X => [[C0, C1], [C1, C0]],
            Gate::Y => [[C0, -CI], [CI, C0]],
            Gate::Z => [[C1, C0], [C0, -C1]],
            Gate::H => [[CS, CS], [CS, -CS]],
        }
    }
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[C0; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

pub fn mat2_adjoint(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

/// Largest entry-wise deviation of `a a†` from the identity.
pub fn mat2_unitarity_defect(a: &Mat2) -> f64 {
    let p = mat2_mul(a, &mat2_adjoint(a));
    let mut worst = 0.0f64;
    for (r, row) in p.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let target = if r == c { C1 } else { C0 };
            worst = worst.max((v - target).norm());
        }
    }
    worst
}

/// Measurement basis of a single qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    /// The commitment basis for a bit: 0 is Z, 1 is X.
    pub fn from_bit(bit: u8) -> Basis {
        if bit & 1 == 0 {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
        }
    }

    pub fn other(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }

    /// Unitary whose columns are the basis vectors (outcome 0 first).
    pub fn unitary(self) -> Mat2 {
        match self {
            Basis::Z => Gate::I.matrix(),
            Basis::X => Gate::H.matrix(),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Basis {
        if rng.random::<bool>() {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

/// One of |0>, |1>, |+>, |->.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bb84State {
    pub basis: Basis,
    pub bit: u8,
}

impl Bb84State {
    pub const ZERO: Bb84State = Bb84State { basis: Basis::Z, bit: 0 };
    pub const ONE: Bb84State = Bb84State { basis: Basis::Z, bit: 1 };
    pub const PLUS: Bb84State = Bb84State { basis: Basis::X, bit: 0 };
    pub const MINUS: Bb84State = Bb84State { basis: Basis::X, bit: 1 };
    pub const ALL: [Bb84State; 4] = [Self::ZERO, Self::ONE, Self::PLUS, Self::MINUS];

    pub fn new(basis: Basis, bit: u8) -> Self {
        Self { basis, bit: bit & 1 }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let basis = Basis::random(rng);
        Self::new(basis, rng.random::<bool>() as u8)
    }

    /// The orthogonal partner in the same basis.
    pub fn flipped(self) -> Self {
        Self::new(self.basis, self.bit ^ 1)
    }

    /// Unitary `U` with `U|0> = self` and `U|1> = self.flipped()`.
    pub fn preparation(self) -> Mat2 {
        let b = self.basis.unitary();
        if self.bit == 0 {
            b
        } else {
            mat2_mul(&b, &Gate::X.matrix())
        }
    }

    pub fn amplitudes(self) -> [Complex64; 2] {
        let u = self.preparation();
        [u[0][0], u[1][0]]
    }

    pub fn label(self) -> &'static str {
        match (self.basis, self.bit) {
            (Basis::Z, 0) => "0",
            (Basis::Z, _) => "1",
            (Basis::X, 0) => "+",
            (Basis::X, _) => "-",
        }
    }
}

/// Pauli pad bits for one qubit; the pad applied is `X^x Z^z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliBits {
    pub x: bool,
    pub z: bool,
}

impl PauliBits {
    pub const ALL: [PauliBits; 4] = [
        PauliBits { x: false, z: false },
        PauliBits { x: true, z: false },
        PauliBits { x: true, z: true },
        PauliBits { x: false, z: true },
    ];

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { x: rng.random(), z: rng.random() }
    }

    pub fn matrix(self) -> Mat2 {
        let mut m = Gate::I.matrix();
        if self.z {
            m = mat2_mul(&Gate::Z.matrix(), &m);
        }
        if self.x {
            m = mat2_mul(&Gate::X.matrix(), &m);
        }
        m
    }

    /// Effect of the pad on a BB84 state, up to global phase.
    pub fn act(self, s: Bb84State) -> Bb84State {
        let flip = match s.basis {
            Basis::Z => self.x,
            Basis::X => self.z,
        };
        Bb84State::new(s.basis, s.bit ^ flip as u8)
    }
}

/// A per-qubit Pauli one-time pad.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliKey(pub Vec<PauliBits>);

impl PauliKey {
    pub fn identity(len: usize) -> Self {
        Self(vec![PauliBits::default(); len])
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| PauliBits::random(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> PauliBits {
        self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gates_are_unitary() {
        for g in Gate::ALL {
            assert!(mat2_unitarity_defect(&g.matrix()) < 1e-15, "{g:?}");
        }
    }

    #[test]
    fn y_matches_xz_up_to_phase() {
        // Y = i X Z
        let xz = mat2_mul(&Gate::X.matrix(), &Gate::Z.matrix());
        let y = Gate::Y.matrix();
        for r in 0..2 {
            for c in 0..2 {
                assert!((y[r][c] - CI * xz[r][c]).norm() < 1e-15);
            }
        }
        assert_eq!(PauliBits { x: true, z: true }.matrix(), xz);
    }

    #[test]
    fn preparation_vectors() {
        let s = FRAC_1_SQRT_2;
        let expect = [
            (Bb84State::ZERO, [1.0, 0.0]),
            (Bb84State::ONE, [0.0, 1.0]),
            (Bb84State::PLUS, [s, s]),
            (Bb84State::MINUS, [s, -s]),
        ];
        for (state, v) in expect {
            let a = state.amplitudes();
            assert!((a[0].re - v[0]).abs() < 1e-15 && (a[1].re - v[1]).abs() < 1e-15, "{state:?}");
            assert!(a[0].im.abs() < 1e-15 && a[1].im.abs() < 1e-15);
        }
    }

    #[test]
    fn pad_action_on_bb84_states() {
        assert_eq!(PauliBits { x: true, z: false }.act(Bb84State::ZERO), Bb84State::ONE);
        assert_eq!(PauliBits { x: true, z: false }.act(Bb84State::PLUS), Bb84State::PLUS);
        assert_eq!(PauliBits { x: false, z: true }.act(Bb84State::PLUS), Bb84State::MINUS);
        assert_eq!(PauliBits { x: false, z: true }.act(Bb84State::ONE), Bb84State::ONE);
        assert_eq!(PauliBits { x: true, z: true }.act(Bb84State::MINUS), Bb84State::PLUS);
    }
}
