//! Ensembles, purifications and the steering attack.
//!
//! Two ensembles with the same density matrix admit purifications related by
//! a unitary on the reference system alone. A committer who holds the
//! reference of a purification of ensemble 0 can therefore produce either
//! ensemble's member at unveil time by choosing the reference measurement.

use crate::error::{Error, Result};
use crate::qcore::register::{sample_binary, sample_index};
use crate::qcore::{Bb84State, DensityMatrix, Register};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Weight tolerance for ensembles.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Largest density mismatch for which a cheat unitary is computed.
pub const DENSITY_MATCH_TOL: f64 = 1e-9;
/// Residual tolerance of a solved cheat unitary.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// A finite ensemble of pure states with positive weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: Vec<(f64, Register)>,
}

impl Ensemble {
    pub fn new(members: Vec<(f64, Register)>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::InvalidState("empty ensemble".into()))?;
        let n = first.1.n_qubits();
        let mut total = 0.0;
        for (w, r) in &members {
            if !(*w > 0.0 && *w <= 1.0 + WEIGHT_TOL) {
                return Err(Error::InvalidState(format!("weight {w} outside (0, 1]")));
            }
            if r.n_qubits() != n {
                return Err(Error::DimensionMismatch { expected: 1 << n, actual: r.dim() });
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidState(format!("weights sum to {total}")));
        }
        Ok(Self { members })
    }

    /// Equal-weight ensemble of BB84 states.
    pub fn uniform_bb84(states: &[Bb84State]) -> Result<Self> {
        let w = 1.0 / states.len() as f64;
        Self::new(states.iter().map(|s| (w, s.register())).collect())
    }

    pub fn members(&self) -> &[(f64, Register)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        self.members[0].1.n_qubits()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    pub fn state(&self, j: usize) -> &Register {
        &self.members[j].1
    }

    /// `d x cols` matrix whose column `j` is `sqrt(p_j) chi_j`, zero-padded.
    pub fn tilde_matrix(&self, cols: usize) -> DMatrix<Complex64> {
        let mut a = DMatrix::zeros(self.dim(), cols.max(self.len()));
        for (j, (w, r)) in self.members.iter().enumerate() {
            for (x, amp) in r.amplitudes().iter().enumerate() {
                a[(x, j)] = amp * w.sqrt();
            }
        }
        a
    }
}

pub fn ensemble_density(ens: &Ensemble) -> DensityMatrix {
    let a = ens.tilde_matrix(ens.len());
    DensityMatrix::from_raw(&a * a.adjoint())
}

/// The purification `sum_j e_j ⊗ sqrt(p_j) chi_j` of an ensemble, stored as
/// the `d x K` matrix of its reference-conditioned evidence vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Purification {
    a: DMatrix<Complex64>,
}

pub fn purify(ens: &Ensemble) -> Purification {
    Purification { a: ens.tilde_matrix(ens.len()) }
}

impl Purification {
    pub fn reference_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn evidence_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Joint state vector over reference ⊗ evidence, index `j * d + x`.
    pub fn joint_state(&self) -> DVector<Complex64> {
        let (d, k) = (self.a.nrows(), self.a.ncols());
        DVector::from_fn(k * d, |i, _| self.a[(i % d, i / d)])
    }

    /// Partial trace over the reference.
    pub fn reduced_evidence(&self) -> DensityMatrix {
        DensityMatrix::from_raw(&self.a * self.a.adjoint())
    }

    /// Squared Schmidt coefficients, in descending order.
    pub fn schmidt_coefficients(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.a.singular_values().iter().map(|x| x * x).collect();
        s.sort_by(|x, y| y.total_cmp(x));
        s
    }

    /// Measures the reference in the orthonormal basis whose `j`-th vector
    /// has components `basis[(j, k)]` on `e_k`, returning the outcome and the
    /// normalised evidence state.
    pub fn measure_reference<R: Rng + ?Sized>(
        &self,
        basis: &DMatrix<Complex64>,
        rng: &mut R,
    ) -> Result<(usize, Register)> {
        let k = basis.ncols();
        if k < self.a.ncols() || basis.nrows() != k {
            return Err(Error::DimensionMismatch { expected: self.a.ncols(), actual: k });
        }
        let mut a = DMatrix::zeros(self.a.nrows(), k);
        a.columns_mut(0, self.a.ncols()).copy_from(&self.a);
        // Conditional evidence vector for outcome j: sum_k conj(f_jk) a_k.
        let cond = &a * basis.transpose().map(|z| z.conj());
        let probs: Vec<f64> = (0..k).map(|j| cond.column(j).norm_squared()).collect();
        let j = sample_index(&probs, rng);
        let v: Vec<Complex64> = cond.column(j).iter().copied().collect();
        let n_qubits = self.a.nrows().trailing_zeros() as usize;
        Ok((j, Register::normalized(n_qubits, &v)))
    }
}

/// A unitary `U` on the reference with `A = B U`, where the columns of `A`
/// and `B` are the weighted states of ensembles 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CheatUnitary {
    matrix: DMatrix<Complex64>,
}

impl CheatUnitary {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |A - B U|` for the two ensembles.
    pub fn residual(&self, ens0: &Ensemble, ens1: &Ensemble) -> f64 {
        let k = self.dim();
        let a = ens0.tilde_matrix(k);
        let b = ens1.tilde_matrix(k);
        if a.ncols() != k || b.ncols() != k || a.nrows() != b.nrows() {
            return f64::INFINITY;
        }
        max_abs(&(a - b * &self.matrix))
    }

    pub fn unitarity_defect(&self) -> f64 {
        let k = self.dim();
        max_abs(&(&self.matrix * self.matrix.adjoint() - DMatrix::identity(k, k)))
    }

    /// Copy with every column scaled so its largest entry is real positive.
    pub fn column_phase_normalized(&self) -> DMatrix<Complex64> {
        normalize_column_phases(&self.matrix)
    }

    /// Distance between two unitaries after column phase normalisation.
    pub fn distance(&self, other: &CheatUnitary) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        max_abs(&(self.column_phase_normalized() - other.column_phase_normalized()))
    }
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn normalize_column_phases(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let pivot = col.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm()));
        if let Some(p) = pivot.filter(|p| p.norm() > 1e-12) {
            let phase = p.conj() / p.norm();
            col.iter_mut().for_each(|z| *z *= phase);
        }
    }
    out
}

/// Solves `A = B U` for a unitary `U`, where `A` and `B` hold the weighted
/// members of the two ensembles (padded with zero vectors to a common size).
///
/// With `M = B† A = W S X†`, the polar factor `U = W X†` satisfies the
/// equation whenever `A A† = B B†`, including rank-deficient cases.
pub fn solve_cheat_unitary(ens0: &Ensemble, ens1: &Ensemble) -> Result<CheatUnitary> {
    if ens0.dim() != ens1.dim() {
        return Err(Error::DimensionMismatch { expected: ens0.dim(), actual: ens1.dim() });
    }
    let k = ens0.len().max(ens1.len());
    let a = ens0.tilde_matrix(k);
    let b = ens1.tilde_matrix(k);
    let gap = max_abs(&(&a * a.adjoint() - &b * b.adjoint()));
    if gap > DENSITY_MATCH_TOL {
        return Err(Error::DensitiesDiffer(gap));
    }
    let svd = (b.adjoint() * &a).svd(true, true);
    let w = svd.u.expect("requested U");
    let xt = svd.v_t.expect("requested V^T");
    let u = CheatUnitary { matrix: w * xt };
    let res = u.residual(ens0, ens1);
    if res > RESIDUAL_TOL {
        return Err(Error::Domain(format!("cheat unitary residual {res:e} exceeds tolerance")));
    }
    Ok(u)
}

/// Reference basis realising the target ensemble: `e_j` for target 0 and
/// `f_j = sum_k U_jk e_k` for target 1.
pub fn steering_basis(u: &CheatUnitary, target_bit: u8) -> DMatrix<Complex64> {
    let k = u.dim();
    if target_bit == 0 {
        DMatrix::identity(k, k)
    } else {
        u.matrix.clone()
    }
}

/// Measures the reference so that the evidence becomes a member of the
/// target ensemble; returns the member index to claim and the evidence.
pub fn steer_and_unveil<R: Rng + ?Sized>(
    purification: &Purification,
    u: &CheatUnitary,
    target_bit: u8,
    rng: &mut R,
) -> Result<(usize, Register)> {
    purification.measure_reference(&steering_basis(u, target_bit), rng)
}

/// A receiver who, told the member index `j`, tests whether the evidence is
/// the `j`-th state of the claimed ensemble.
pub fn toy_receiver_accepts<R: Rng + ?Sized>(
    claimed: &Ensemble,
    j: usize,
    evidence: &Register,
    rng: &mut R,
) -> Result<bool> {
    if j >= claimed.len() {
        // Padded index: the receiver has no such member.
        return Ok(false);
    }
    let p = claimed.state(j).overlap_sq(evidence)?;
    Ok(sample_binary(p, 1.0 - p, rng) == 0)
}

/// One full steering round: purify ensemble 0, steer towards `target_bit`,
/// and let the toy receiver check against the target ensemble.
pub fn steering_trial<R: Rng + ?Sized>(
    ensembles: &[Ensemble; 2],
    u: &CheatUnitary,
    target_bit: u8,
    rng: &mut R,
) -> Result<bool> {
    let purification = purify(&ensembles[0]);
    let (j, evidence) = steer_and_unveil(&purification, u, target_bit, rng)?;
    toy_receiver_accepts(&ensembles[target_bit as usize & 1], j, &evidence, rng)
}

/// Applies the same evidence unitary `v` to every member.
pub fn rotate_ensemble(ens: &Ensemble, v: &DMatrix<Complex64>) -> Result<Ensemble> {
    let d = ens.dim();
    if v.nrows() != d || v.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: v.nrows() });
    }
    let defect = max_abs(&(v * v.adjoint() - DMatrix::identity(d, d)));
    if defect > DENSITY_MATCH_TOL {
        return Err(Error::NonUnitary(defect));
    }
    let members = ens
        .members
        .iter()
        .map(|(w, r)| {
            let out = v * DVector::from_column_slice(r.amplitudes());
            (*w, Register::normalized(r.n_qubits(), out.as_slice()))
        })
        .collect();
    Ensemble::new(members)
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian
/// matrix, with the phases of `R`'s diagonal absorbed.
pub fn random_unitary<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(k, k, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            col.iter_mut().for_each(|z| *z *= phase);
        }
    }
    q
}

/// Random pure state on `n_qubits` qubits.
pub fn random_state<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Register {
    let v: Vec<Complex64> = (0..1 << n_qubits)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    Register::normalized(n_qubits, &v)
}

/// Random ensemble of `k` members with weights bounded away from zero.
pub fn random_ensemble<R: Rng + ?Sized>(k: usize, n_qubits: usize, rng: &mut R) -> Result<Ensemble> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Ensemble::new(raw.iter().map(|w| (w / total, random_state(n_qubits, rng))).collect())
}

/// The ensemble whose weighted members are the columns of `A u†`; it has the
/// same density matrix as `ens`, and `u` solves the cheat equation between
/// them.
pub fn remix_ensemble(ens: &Ensemble, u: &DMatrix<Complex64>) -> Result<Ensemble> {
    let k = u.nrows();
    if u.ncols() != k || k < ens.len() {
        return Err(Error::DimensionMismatch { expected: ens.len(), actual: k });
    }
    let b = ens.tilde_matrix(k) * u.adjoint();
    let mut members = Vec::with_capacity(k);
    let mut dropped = 0.0;
    for col in b.column_iter() {
        let w = col.norm_squared();
        if w < 1e-15 {
            dropped += w;
            continue;
        }
        members.push((w, Register::normalized(ens.n_qubits(), col.as_slice())));
    }
    debug_assert!(dropped < 1e-12);
    Ensemble::new(members)
}

/// Named ensemble pairs used by demos and tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SteeringPreset {
    /// Z eigenstates against X eigenstates, both with weights one half.
    Zx,
    /// A random four-member qubit ensemble against a unitary remix of it.
    Remix,
    /// Z eigenstates with unequal weights against X eigenstates; the
    /// densities differ so no cheat unitary exists.
    Unequal,
}

impl SteeringPreset {
    pub fn ensembles<R: Rng + ?Sized>(self, rng: &mut R) -> Result<[Ensemble; 2]> {
        match self {
            SteeringPreset::Zx => Ok([
                Ensemble::uniform_bb84(&[Bb84State::ZERO, Bb84State::ONE])?,
                Ensemble::uniform_bb84(&[Bb84State::PLUS, Bb84State::MINUS])?,
            ]),
            SteeringPreset::Remix => {
                let e0 = random_ensemble(4, 1, rng)?;
                let e1 = remix_ensemble(&e0, &random_unitary(4, rng))?;
                Ok([e0, e1])
            }
            SteeringPreset::Unequal => Ok([
                Ensemble::new(vec![
                    (0.7, Bb84State::ZERO.register()),
                    (0.3, Bb84State::ONE.register()),
                ])?,
                Ensemble::uniform_bb84(&[Bb84State::PLUS, Bb84State::MINUS])?,
            ]),
        }
    }
}

impl SteeringPreset {
    pub const ALL: [SteeringPreset; 3] = [SteeringPreset::Zx, SteeringPreset::Remix, SteeringPreset::Unequal];

    pub fn name(self) -> &'static str {
        match self {
            SteeringPreset::Zx => "zx",
            SteeringPreset::Remix => "remix",
            SteeringPreset::Unequal => "unequal",
        }
    }
}

impl std::str::FromStr for SteeringPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        SteeringPreset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}' (expected zx, remix or unequal)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::fidelity;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn zx() -> [Ensemble; 2] {
        SteeringPreset::Zx.ensembles(&mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn zx_cheat_unitary_is_hadamard_like() {
        let [e0, e1] = zx();
        let u = solve_cheat_unitary(&e0, &e1).unwrap();
        for z in u.matrix().iter() {
            assert!((z.norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert!(u.residual(&e0, &e1) < 1e-12);
        assert!(u.unitarity_defect() < 1e-12);
    }

    #[test]
    fn unequal_densities_are_rejected() {
        let [e0, e1] = SteeringPreset::Unequal.ensembles(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(solve_cheat_unitary(&e0, &e1), Err(Error::DensitiesDiffer(_))));
    }

    #[test]
    fn ensemble_validation() {
        let r = Bb84State::ZERO.register();
        assert!(Ensemble::new(vec![(0.5, r.clone())]).is_err());
        assert!(Ensemble::new(vec![(0.0, r.clone()), (1.0, r.clone())]).is_err());
        assert!(Ensemble::new(vec![]).is_err());
        assert!(Ensemble::new(vec![(0.5, r.clone()), (0.5, Register::zero(2).unwrap())]).is_err());
    }

    #[test]
    fn steering_produces_both_ensembles() {
        let ens = zx();
        let u = solve_cheat_unitary(&ens[0], &ens[1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for target in 0..2u8 {
            for _ in 0..500 {
                assert!(steering_trial(&ens, &u, target, &mut rng).unwrap());
            }
        }
    }

    #[test]
    fn steered_outcomes_follow_target_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ens = SteeringPreset::Remix.ensembles(&mut rng).unwrap();
        let u = solve_cheat_unitary(&ens[0], &ens[1]).unwrap();
        let p = purify(&ens[0]);
        let trials = 20_000;
        let mut counts = vec![0usize; u.dim()];
        for _ in 0..trials {
            let (j, ev) = steer_and_unveil(&p, &u, 1, &mut rng).unwrap();
            assert!(ens[1].state(j).equals_up_to_phase(&ev, 1e-9));
            counts[j] += 1;
        }
        for (j, (w, _)) in ens[1].members().iter().enumerate() {
            let f = counts[j] as f64 / trials as f64;
            let sigma = (w * (1.0 - w) / trials as f64).sqrt();
            assert!((f - w).abs() < 4.0 * sigma + 1e-3, "member {j}: {f} vs {w}");
        }
    }

    #[test]
    fn rank_deficient_padding() {
        // Two members against three: the smaller ensemble is padded.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e0 = Ensemble::uniform_bb84(&[Bb84State::ZERO, Bb84State::ONE]).unwrap();
        let e1 = remix_ensemble(&e0, &random_unitary(3, &mut rng)).unwrap();
        assert_eq!(e1.len(), 3);
        let u = solve_cheat_unitary(&e0, &e1).unwrap();
        assert_eq!(u.dim(), 3);
        assert!(u.residual(&e0, &e1) < 1e-10);
        let ens = [e0, e1];
        for target in 0..2 {
            for _ in 0..200 {
                assert!(steering_trial(&ens, &u, target, &mut rng).unwrap());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn purification_reduces_to_ensemble_density(seed in any::<u64>(), k in 1usize..6, n in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ens = random_ensemble(k, n, &mut rng).unwrap();
            let p = purify(&ens);
            let diff = p.reduced_evidence().max_abs_diff(&ensemble_density(&ens)).unwrap();
            prop_assert!(diff <= 1e-12);
            let joint = p.joint_state();
            prop_assert!((joint.norm_squared() - 1.0).abs() < 1e-12);
            let sc: f64 = p.schmidt_coefficients().iter().sum();
            prop_assert!((sc - 1.0).abs() < 1e-10);
        }

        #[test]
        fn remixed_pairs_solve_with_small_residual(seed in any::<u64>(), k in 1usize..6, n in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e0 = random_ensemble(k, n, &mut rng).unwrap();
            let e1 = remix_ensemble(&e0, &random_unitary(k, &mut rng)).unwrap();
            let u = solve_cheat_unitary(&e0, &e1).unwrap();
            prop_assert!(u.residual(&e0, &e1) <= 1e-9);
            prop_assert!(u.unitarity_defect() <= 1e-9);
        }

        #[test]
        fn cheat_unitary_is_covariant(seed in any::<u64>(), k in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e0 = random_ensemble(k, 1, &mut rng).unwrap();
            let e1 = remix_ensemble(&e0, &random_unitary(k, &mut rng)).unwrap();
            let v = random_unitary(2, &mut rng);
            let r0 = rotate_ensemble(&e0, &v).unwrap();
            let r1 = rotate_ensemble(&e1, &v).unwrap();
            let u = solve_cheat_unitary(&e0, &e1).unwrap();
            let ur = solve_cheat_unitary(&r0, &r1).unwrap();
            prop_assert!(ur.residual(&r0, &r1) <= 1e-9);
            // The solution for the rotated pair also solves the original.
            prop_assert!(ur.residual(&e0, &e1) <= 1e-9);
            if k == 2 {
                // Full rank: the polar factor is unique.
                prop_assert!(u.distance(&ur) <= 1e-9);
            }
        }

        #[test]
        fn remix_preserves_density(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e0 = random_ensemble(k, 2, &mut rng).unwrap();
            let e1 = remix_ensemble(&e0, &random_unitary(k + 1, &mut rng)).unwrap();
            let f = fidelity(&ensemble_density(&e0), &ensemble_density(&e1)).unwrap();
            prop_assert!((f - 1.0).abs() < 1e-9);
        }
    }
}
