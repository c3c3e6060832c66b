//! Collective-spin form of the P1 evidence state for at most two committed
//! qubits.
//!
//! The evidence is invariant under qubit permutations, so it is a
//! polynomial in the total spin `J = sum_p sigma_p / 2` and splits into
//! spin-`j` blocks, each repeated once per copy of that irrep. Fidelities
//! between such states are multiplicity-weighted sums over blocks, which
//! keeps registers of dozens of qubits tractable.

use crate::error::{Error, Result};
use crate::qcore::density::psd_fidelity;
use crate::qcore::Register;
use nalgebra::DMatrix;
use num_complex::Complex64;

type C = Complex64;

/// Largest register handled by the block form.
pub const MAX_SYMMETRIC_QUBITS: usize = 60;

/// Permutation-symmetric evidence state given by the Bloch vectors of the
/// committed qubits and the total qubit count.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEvidence {
    n_total: usize,
    blochs: Vec<[f64; 3]>,
}

impl SymmetricEvidence {
    /// Evidence for the single-qubit `commit` states hidden among `decoys`
    /// fully mixed qubits.
    pub fn new(commit: &[Register], decoys: usize) -> Result<Self> {
        if commit.len() > 2 {
            return Err(Error::TooLarge(format!("{} committed qubits (block form handles at most 2)", commit.len())));
        }
        let n_total = commit.len() + decoys;
        if n_total == 0 || n_total > MAX_SYMMETRIC_QUBITS {
            return Err(Error::InvalidParams(format!("{n_total} evidence qubits")));
        }
        let mut blochs = Vec::with_capacity(commit.len());
        for r in commit {
            if r.n_qubits() != 1 {
                return Err(Error::DimensionMismatch { expected: 2, actual: r.dim() });
            }
            let v = r.amplitudes();
            let c = v[0].conj() * v[1];
            blochs.push([2.0 * c.re, 2.0 * c.im, v[0].norm_sqr() - v[1].norm_sqr()]);
        }
        Ok(Self { n_total, blochs })
    }

    pub fn maximally_mixed(n_total: usize) -> Self {
        Self { n_total, blochs: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_total
    }

    /// `(multiplicity, block)` for every spin sector, largest spin first.
    pub fn blocks(&self) -> Vec<(f64, DMatrix<C>)> {
        let n = self.n_total;
        let nf = n as f64;
        let scale = 0.5f64.powi(n as i32);
        (0..=n / 2)
            .map(|k| {
                let mult = binom(n, k) - if k == 0 { 0.0 } else { binom(n, k - 1) };
                let j = spin_matrices(n - 2 * k);
                let dim = n - 2 * k + 1;
                let mut m = DMatrix::<C>::identity(dim, dim);
                let dot = |r: &[f64; 3]| -> DMatrix<C> {
                    &j[0] * C::new(r[0], 0.0) + &j[1] * C::new(r[1], 0.0) + &j[2] * C::new(r[2], 0.0)
                };
                match self.blochs.as_slice() {
                    [] => {}
                    [r] => m += dot(r) * C::new(2.0 / nf, 0.0),
                    [r0, r1] => {
                        let sum = [r0[0] + r1[0], r0[1] + r1[1], r0[2] + r1[2]];
                        m += dot(&sum) * C::new(2.0 / nf, 0.0);
                        let inner = r0[0] * r1[0] + r0[1] * r1[1] + r0[2] * r1[2];
                        let cross = [
                            r0[1] * r1[2] - r0[2] * r1[1],
                            r0[2] * r1[0] - r0[0] * r1[2],
                            r0[0] * r1[1] - r0[1] * r1[0],
                        ];
                        let pair = dot(r0) * dot(r1) * C::new(4.0, 0.0)
                            - DMatrix::<C>::identity(dim, dim) * C::new(nf * inner, 0.0)
                            - dot(&cross) * C::new(0.0, 2.0);
                        m += pair * C::new(1.0 / (nf * (nf - 1.0)), 0.0);
                    }
                    _ => unreachable!("at most two committed qubits"),
                }
                (mult, m * C::new(scale, 0.0))
            })
            .collect()
    }

    /// Total trace, one for a valid state.
    pub fn trace(&self) -> f64 {
        self.blocks().iter().map(|(mult, b)| mult * b.trace().re).sum()
    }

    /// Eigenvalues with multiplicities, matching the dense spectrum.
    pub fn spectrum(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (mult, b) in self.blocks() {
            let h = (&b + b.adjoint()) * C::new(0.5, 0.0);
            for l in h.symmetric_eigenvalues().iter() {
                out.push((*l, mult));
            }
        }
        out
    }
}

/// Fidelity between two permutation-symmetric evidence states.
pub fn symmetric_fidelity(a: &SymmetricEvidence, b: &SymmetricEvidence) -> Result<f64> {
    if a.n_total != b.n_total {
        return Err(Error::DimensionMismatch { expected: a.n_total, actual: b.n_total });
    }
    let mut f = 0.0;
    for ((mult, ba), (_, bb)) in a.blocks().iter().zip(b.blocks().iter()) {
        f += mult * psd_fidelity(ba, bb)?;
    }
    Ok(f.clamp(0.0, 1.0))
}

/// `J_x, J_y, J_z` for spin `two_j / 2`, basis ordered by decreasing `m`.
fn spin_matrices(two_j: usize) -> [DMatrix<C>; 3] {
    let dim = two_j + 1;
    let j = two_j as f64 / 2.0;
    let mut jz = DMatrix::<C>::zeros(dim, dim);
    let mut jp = DMatrix::<C>::zeros(dim, dim);
    for i in 0..dim {
        let m = j - i as f64;
        jz[(i, i)] = C::new(m, 0.0);
        if i > 0 {
            jp[(i - 1, i)] = C::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * C::new(0.5, 0.0);
    let jy = (&jp - &jm) * C::new(0.0, -0.5);
    [jx, jy, jz]
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
