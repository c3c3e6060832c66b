//! Density matrices and Uhlmann fidelity.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Hermiticity and unit-trace tolerance for constructed density matrices.
pub const DENSITY_TOL: f64 = 1e-12;
/// Eigenvalues below this magnitude are treated as exact zeros.
pub const EIGEN_CLIP: f64 = 1e-14;
/// Most negative eigenvalue accepted as numerical noise.
pub const POSITIVITY_TOL: f64 = 1e-9;

/// A Hermitian, unit-trace matrix on `2^k` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates shape, hermiticity and trace. Positivity is checked where
    /// the spectrum is computed, i.e. inside [`fidelity`] and
    /// [`DensityMatrix::is_positive`].
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        let d = m.nrows();
        if m.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: m.ncols() });
        }
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::InvalidState(format!("dimension {d} is not a power of two")));
        }
        let mut herm = 0.0f64;
        for r in 0..d {
            for c in r..d {
                herm = herm.max((m[(r, c)] - m[(c, r)].conj()).norm());
            }
        }
        if herm > DENSITY_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        Ok(Self { m })
    }

    pub fn from_pure(amps: &[Complex64]) -> Self {
        let v = nalgebra::DVector::from_column_slice(amps);
        Self { m: &v * v.adjoint() }
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        Self { m: DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0)) }
    }

    /// Convex combination; weights must be nonnegative and sum to 1.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidState("empty mixture".into()))?;
        let d = first.1.dim();
        let mut acc = DMatrix::zeros(d, d);
        for (w, rho) in parts {
            if rho.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: rho.dim() });
            }
            if *w < 0.0 {
                return Err(Error::InvalidState(format!("negative weight {w}")));
            }
            acc += rho.matrix() * Complex64::new(*w, 0.0);
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        self.m[(r, c)]
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        Self { m: self.m.kronecker(&other.m) }
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(self.m.iter().zip(other.m.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        is_diagonal(&self.m, tol)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = hermitian_eigenvalues(&self.m);
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.eigenvalues().first().is_none_or(|&l| l >= -tol)
    }

    /// Conjugation `U rho U†` by a unitary of matching size.
    pub fn conjugate_by(&self, u: &DMatrix<Complex64>) -> Result<DensityMatrix> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: u.nrows() });
        }
        Ok(Self { m: u * &self.m * u.adjoint() })
    }

    pub(crate) fn from_raw(m: DMatrix<Complex64>) -> Self {
        Self { m }
    }
}

fn is_diagonal(m: &DMatrix<Complex64>, tol: f64) -> bool {
    let d = m.nrows();
    for c in 0..d {
        for r in 0..d {
            if r != c && m[(r, c)].norm() > tol {
                return false;
            }
        }
    }
    true
}

/// If `m` is a multiple `c * I`, returns `c`.
fn identity_multiple(m: &DMatrix<Complex64>, tol: f64) -> Option<f64> {
    let c = m[(0, 0)].re;
    let diag_ok = (0..m.nrows()).all(|i| (m[(i, i)] - c).norm() <= tol);
    (diag_ok && is_diagonal(m, tol)).then_some(c)
}

fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().collect()
}

fn clip(l: f64) -> Result<f64> {
    if l < -POSITIVITY_TOL {
        return Err(Error::NotPositive(l));
    }
    Ok(if l < EIGEN_CLIP { 0.0 } else { l })
}

fn sum_sqrt(ev: &[f64]) -> Result<f64> {
    ev.iter().map(|&l| clip(l).map(f64::sqrt)).sum()
}

/// `sqrt(a)` for a Hermitian positive semidefinite matrix.
fn psd_sqrt(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &l in eig.eigenvalues.iter() {
        roots.push(Complex64::new(clip(l)?.sqrt(), 0.0));
    }
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots));
    Ok(v * d * v.adjoint())
}

/// `Tr sqrt(sqrt(b) a sqrt(b))` for positive semidefinite `a`, `b` of equal
/// size. Neither needs unit trace.
pub(crate) fn psd_fidelity(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), actual: b.nrows() });
    }
    let tol = 1e-13;
    if is_diagonal(a, tol) && is_diagonal(b, tol) {
        let mut f = 0.0;
        for i in 0..a.nrows() {
            f += (clip(a[(i, i)].re)? * clip(b[(i, i)].re)?).sqrt();
        }
        return Ok(f);
    }
    if let Some(c) = identity_multiple(b, tol) {
        return Ok(clip(c)?.sqrt() * sum_sqrt(&hermitian_eigenvalues(a))?);
    }
    if let Some(c) = identity_multiple(a, tol) {
        return Ok(clip(c)?.sqrt() * sum_sqrt(&hermitian_eigenvalues(b))?);
    }
    if a.nrows() <= 256 {
        for l in hermitian_eigenvalues(a) {
            clip(l)?;
        }
    }
    let sb = psd_sqrt(b)?;
    let inner = &sb * a * &sb;
    sum_sqrt(&hermitian_eigenvalues(&inner))
}

/// Uhlmann fidelity `F(rho, sigma) = Tr sqrt(sqrt(sigma) rho sqrt(sigma))`,
/// clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    Ok(psd_fidelity(&rho.m, &sigma.m)?.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::gate::Bb84State;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_bad_matrices() {
        let not_herm = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.1), c(0.0), c(0.5)]);
        assert!(DensityMatrix::new(not_herm).is_err());
        let bad_trace = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.0), c(0.0), c(0.6)]);
        assert!(DensityMatrix::new(bad_trace).is_err());
        let bad_dim = DMatrix::from_diagonal_element(3, 3, c(1.0 / 3.0));
        assert!(DensityMatrix::new(bad_dim).is_err());
    }

    #[test]
    fn negative_eigenvalue_is_rejected_by_fidelity() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        let rho = DensityMatrix::new(m).unwrap();
        let sigma = DensityMatrix::maximally_mixed(1);
        assert!(matches!(fidelity(&rho, &sigma), Err(Error::NotPositive(_))));
        assert!(!rho.is_positive(1e-12));
    }

    #[test]
    fn orthogonal_pure_states_have_zero_fidelity() {
        let a = Bb84State::ZERO.register().density();
        let b = Bb84State::ONE.register().density();
        assert!(fidelity(&a, &b).unwrap().abs() < 1e-15);
    }

    #[test]
    fn pure_state_fidelity_is_overlap_modulus() {
        let a = Bb84State::ZERO.register().density();
        let b = Bb84State::PLUS.register().density();
        let f = fidelity(&a, &b).unwrap();
        assert!((f - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9, "{f}");
    }

    #[test]
    fn pure_state_against_mixed() {
        let a = Bb84State::PLUS.register().density();
        let f = fidelity(&a, &DensityMatrix::maximally_mixed(1)).unwrap();
        assert!((f - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12, "{f}");
    }

    #[test]
    fn self_fidelity_is_one() {
        let a = DensityMatrix::mixture(&[
            (0.3, &Bb84State::PLUS.register().density()),
            (0.7, &Bb84State::ONE.register().density()),
        ])
        .unwrap();
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }
}
