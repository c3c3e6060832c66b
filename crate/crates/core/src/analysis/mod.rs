//! Entropy, the concealment fidelity bound, the combinatorial model of the
//! P1 evidence, and exact oracles to compare them with.

pub mod collective;

pub use collective::{symmetric_fidelity, SymmetricEvidence};

use crate::error::{Error, Result};
use crate::protocol_p1::{evidence_density, MAX_DENSE_QUBITS};
use crate::qcore::{fidelity, Bb84State, DensityMatrix, Register};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::HashMap;

/// Largest `Q + n` accepted by [`upsilon`].
pub const MAX_UPSILON_QUBITS: usize = 512;

/// Binary Shannon entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy of {x}")));
    }
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// `1 - 2^(-Q (1 - H(n/Q)))` for `Q >= n >= 1`.
pub fn fidelity_bound(q: usize, n: usize) -> Result<f64> {
    if n == 0 || q < n {
        return Err(Error::Domain(format!("fidelity bound needs Q >= n >= 1, got Q={q}, n={n}")));
    }
    let h = binary_entropy(n as f64 / q as f64)?;
    Ok(1.0 - (-(q as f64) * (1.0 - h)).exp2())
}

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `2^(Q+n) - sum_{j<n} C(Q+n, j)`: the number of `(Q+n)`-bit strings of
/// Hamming weight at least `n`.
pub fn upsilon(q: usize, n: usize) -> Result<BigUint> {
    let total = q + n;
    if total > MAX_UPSILON_QUBITS {
        return Err(Error::Domain(format!("Q+n = {total} exceeds {MAX_UPSILON_QUBITS}")));
    }
    let mut count = BigUint::one() << total;
    for j in 0..n {
        count -= binomial(total, j);
    }
    Ok(count)
}

/// `sqrt(upsilon / 2^(Q+n))`: fidelity with the fully mixed state of the
/// equal-weight diagonal model whose support is the strings counted by
/// [`upsilon`].
pub fn model_fidelity(q: usize, n: usize) -> Result<f64> {
    let u = upsilon(q, n)?;
    let ratio = BigRational::new(BigInt::from(u), BigInt::from(BigUint::one() << (q + n)));
    Ok(ratio.to_f64().expect("finite ratio").sqrt())
}

/// `(sum_{j<=t} C(T,j) / C(T,t), (T-t+1)/(T-2t+1))` in exact arithmetic,
/// for `T >= 2t >= 2`.
pub fn truncated_binomial_ratio_bound(big_t: usize, t: usize) -> Result<(BigRational, BigRational)> {
    if t == 0 || big_t < 2 * t {
        return Err(Error::Domain(format!("need T > 2t - 1 >= 1, got T={big_t}, t={t}")));
    }
    let sum: BigUint = (0..=t).map(|j| binomial(big_t, j)).sum();
    let exact = BigRational::new(BigInt::from(sum), BigInt::from(binomial(big_t, t)));
    let bound = BigRational::new(BigInt::from(big_t - t + 1), BigInt::from(big_t - 2 * t + 1));
    Ok((exact, bound))
}

/// The bound, the model and (for small instances) the exact mixture,
/// side by side.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub q: usize,
    pub n: usize,
    pub bound: f64,
    pub upsilon: BigUint,
    pub model_fidelity: f64,
    pub oracle_fidelity: Option<f64>,
}

impl BoundReport {
    /// Bound and model without the exact mixture.
    pub fn model_only(q: usize, n: usize) -> Result<Self> {
        Ok(Self {
            q,
            n,
            bound: fidelity_bound(q, n)?,
            upsilon: upsilon(q, n)?,
            model_fidelity: model_fidelity(q, n)?,
            oracle_fidelity: None,
        })
    }

    pub fn model_respects_bound(&self) -> bool {
        self.model_fidelity >= self.bound
    }

    /// `None` when no oracle value was computed.
    pub fn oracle_respects_bound(&self) -> Option<bool> {
        self.oracle_fidelity.map(|f| f >= self.bound)
    }
}

/// Fidelity of the exact P1 evidence state for `commit` among `decoys`
/// decoys with the fully mixed state. Uses the collective-spin blocks for
/// at most two committed qubits and the dense mixture otherwise.
pub fn mixture_fidelity(commit: &[Register], decoys: usize) -> Result<f64> {
    let total = commit.len() + decoys;
    if commit.len() <= 2 {
        let rho = SymmetricEvidence::new(commit, decoys)?;
        return symmetric_fidelity(&rho, &SymmetricEvidence::maximally_mixed(total));
    }
    if total > MAX_DENSE_QUBITS {
        return Err(Error::TooLarge(format!("{total} evidence qubits (limit {MAX_DENSE_QUBITS})")));
    }
    fidelity(&evidence_density(commit, decoys)?, &DensityMatrix::maximally_mixed(total))
}

/// Computes the exact mixture fidelity for the given committed states and
/// reports it beside the bound and the model.
pub fn compare_with_mixture_oracle(q: usize, n: usize, commit_states: &[Bb84State]) -> Result<BoundReport> {
    if commit_states.len() != n {
        return Err(Error::InvalidParams(format!("{} commit states for n = {n}", commit_states.len())));
    }
    if q + n > MAX_DENSE_QUBITS {
        return Err(Error::TooLarge(format!("{} evidence qubits (limit {MAX_DENSE_QUBITS})", q + n)));
    }
    let mut report = BoundReport::model_only(q, n)?;
    let regs: Vec<Register> = commit_states.iter().map(|s| s.register()).collect();
    report.oracle_fidelity = Some(mixture_fidelity(&regs, q)?);
    Ok(report)
}

/// Plug-in mutual information, in bits, of paired discrete samples.
pub fn mutual_information(samples: &[(u64, u64)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total = samples.len() as f64;
    let mut joint: HashMap<(u64, u64), f64> = HashMap::new();
    let mut left: HashMap<u64, f64> = HashMap::new();
    let mut right: HashMap<u64, f64> = HashMap::new();
    for &(x, y) in samples {
        *joint.entry((x, y)).or_default() += 1.0;
        *left.entry(x).or_default() += 1.0;
        *right.entry(y).or_default() += 1.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c / total;
            pxy * (pxy / (left[&x] / total * right[&y] / total)).log2()
        })
        .sum();
    mi.max(0.0)
}
