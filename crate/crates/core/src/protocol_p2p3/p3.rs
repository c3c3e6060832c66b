//! Protocol P3: P2 plus an entanglement certificate.
//!
//! Bob additionally sends halves of `n/2` `|Phi+>` pairs. Alice measures
//! half `i` in the basis given by bit `n/2 + i` of her outcomes `M`
//! (`Z` for 0, `X` for 1) and announces only the first half of `M` together
//! with the singlet outcomes `M2`. At unveil she reveals the withheld half
//! of `M`; Bob checks the BB84 evidence as in P2 and measures his singlet
//! halves in the revealed bases, expecting `M2`.

use super::p2::{commit_session, p2_bob_verify, BobRandomization, CheckPhase, EvidenceString, P2Attack, P2Params, PrepRecord};
use crate::classical::{FailureReason, Verdict};
use crate::error::{Error, Result};
use crate::qcore::{Basis, Qubit};
use crate::rng::{SeedTree, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P3Params {
    pub n: usize,
}

impl P3Params {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidParams(format!("P3 needs a positive even n, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn half(&self) -> usize {
        self.n / 2
    }

    fn p2(&self) -> P2Params {
        P2Params { n: self.n }
    }
}

/// Alice's commit message: the first half of `M` and the singlet outcomes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct P3Evidence {
    m1: Vec<u8>,
    m2: Vec<u8>,
}

impl P3Evidence {
    pub fn new(m1: Vec<u8>, m2: Vec<u8>) -> Self {
        Self { m1, m2 }
    }

    pub fn m1(&self) -> &[u8] {
        &self.m1
    }

    pub fn m2(&self) -> &[u8] {
        &self.m2
    }
}

/// Claimed singlet measurement bases and outcomes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EprCertificate {
    pub bases: Vec<Basis>,
    pub outcomes: Vec<u8>,
}

impl EprCertificate {
    pub fn new(withheld: &[u8], m2: &[u8]) -> Self {
        Self { bases: withheld.iter().map(|&b| Basis::from_bit(b)).collect(), outcomes: m2.to_vec() }
    }

    /// Whether Bob's outcomes, measured in [`EprCertificate::bases`], agree.
    pub fn matches(&self, home_outcomes: &[u8]) -> bool {
        home_outcomes.len() == self.outcomes.len() && home_outcomes.iter().zip(&self.outcomes).all(|(a, b)| a == b)
    }
}

/// Alice's unveil message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P3Opening {
    pub a: u8,
    pub record: PrepRecord,
    pub withheld: Vec<u8>,
}

/// Committer behaviours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum P3Attack {
    None,
    /// Commit to the other bit and unveil the target, revealing the true
    /// withheld bits. This maximises the pass probability of a flipped
    /// opening.
    WrongBasis,
    /// Commit to the other bit and unveil the target with freshly drawn
    /// withheld bits.
    FlipRedraw,
    /// Alice postpones every measurement until unveil and then behaves
    /// honestly for the target.
    Deferred,
}

/// Outcome of Bob's unveil checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P3Verification {
    pub verdict: Verdict,
    /// The P2 part on its own.
    pub bb84_verdict: Verdict,
    pub home_outcomes: Vec<u8>,
}

/// Bob's check of an opening. `home_halves` are consumed by measurement.
pub fn p3_verify<R: Rng + ?Sized>(
    evidence: &P3Evidence,
    opening: &P3Opening,
    randomization: &BobRandomization,
    evidence_positions: &[usize],
    home_halves: &[Qubit],
    store: &mut crate::qcore::QuantumStore,
    rng: &mut R,
) -> Result<P3Verification> {
    let half = home_halves.len();
    if evidence.m2.len() != half || opening.withheld.len() != half {
        let v = Verdict::reject(FailureReason::Malformed);
        return Ok(P3Verification { verdict: v, bb84_verdict: v, home_outcomes: Vec::new() });
    }
    let cert = EprCertificate::new(&opening.withheld, &evidence.m2);
    let mut home_outcomes = Vec::with_capacity(half);
    for (&q, &basis) in home_halves.iter().zip(&cert.bases) {
        home_outcomes.push(store.measure(q, basis, rng)?);
    }
    let (verdict, bb84_verdict) =
        p3_classical_verdict(evidence, opening, randomization, evidence_positions, &home_outcomes);
    Ok(P3Verification { verdict, bb84_verdict, home_outcomes })
}

/// Bob's decision from the classical record alone: the commit and unveil
/// messages, his randomisation and his singlet outcomes. Returns the full
/// verdict and the BB84 part.
pub fn p3_classical_verdict(
    evidence: &P3Evidence,
    opening: &P3Opening,
    randomization: &BobRandomization,
    evidence_positions: &[usize],
    home_outcomes: &[u8],
) -> (Verdict, Verdict) {
    let half = evidence.m2.len();
    if opening.withheld.len() != half || home_outcomes.len() != half {
        let v = Verdict::reject(FailureReason::Malformed);
        return (v, v);
    }
    let mut full = evidence.m1.clone();
    full.extend(&opening.withheld);
    let bb84_verdict =
        p2_bob_verify(opening.a, &opening.record, &EvidenceString::new(full), randomization, evidence_positions);
    let cert = EprCertificate::new(&opening.withheld, &evidence.m2);
    let verdict = if !bb84_verdict.accepted {
        bb84_verdict
    } else if !cert.matches(home_outcomes) {
        Verdict::reject(FailureReason::CertificateMismatch)
    } else {
        Verdict::accept()
    };
    (verdict, bb84_verdict)
}

/// Everything observable about one P3 run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P3Trial {
    pub committed_bit: Option<u8>,
    pub record: PrepRecord,
    pub randomization: BobRandomization,
    pub check: CheckPhase,
    pub evidence: P3Evidence,
    pub opening: P3Opening,
    pub home_outcomes: Vec<u8>,
    pub bb84_verdict: Verdict,
    pub verdict: Verdict,
}

impl P3Trial {
    pub fn unveiled_bit(&self) -> u8 {
        self.opening.a
    }
}

/// Runs one trial; `bit` is the committed bit for an honest run and the
/// unveil target otherwise. The BB84 part draws from the same streams as
/// [`super::run_p2_trial`].
pub fn run_p3_trial(params: &P3Params, attack: P3Attack, bit: u8, seeds: &SeedTree) -> Result<P3Trial> {
    let bit = bit & 1;
    let commit_bit = match attack {
        P3Attack::None | P3Attack::Deferred => bit,
        P3Attack::WrongBasis | P3Attack::FlipRedraw => bit ^ 1,
    };
    let mut session = commit_session(&params.p2(), P2Attack::None, commit_bit, seeds)?;
    let half = params.half();
    let m = session.evidence.bits().to_vec();

    // Bob's singlets: he keeps the first half of each pair.
    let pairs: Vec<(Qubit, Qubit)> = (0..half).map(|_| session.store.bell_pair()).collect();
    let mut singlet_rng = seeds.rng(Stream::Singlet);
    let mut m2 = Vec::with_capacity(half);
    for (i, &(_, alice_half)) in pairs.iter().enumerate() {
        m2.push(session.store.measure(alice_half, Basis::from_bit(m[half + i]), &mut singlet_rng)?);
    }
    let evidence = P3Evidence::new(m[..half].to_vec(), m2);

    let withheld = match attack {
        P3Attack::FlipRedraw => {
            let mut r = seeds.rng(Stream::AliceUnveil);
            (0..half).map(|_| r.random::<bool>() as u8).collect()
        }
        _ => m[half..].to_vec(),
    };
    let record = session.record.clone().expect("honest preparation");
    let opening = P3Opening { a: bit, record: record.clone(), withheld };
    let homes: Vec<Qubit> = pairs.iter().map(|p| p.0).collect();
    let check = p3_verify(
        &evidence,
        &opening,
        &session.randomization,
        &session.check.evidence_positions,
        &homes,
        &mut session.store,
        &mut seeds.rng(Stream::SingletVerify),
    )?;
    Ok(P3Trial {
        committed_bit: Some(commit_bit),
        record,
        randomization: session.randomization,
        check: session.check,
        evidence,
        opening,
        home_outcomes: check.home_outcomes,
        bb84_verdict: check.bb84_verdict,
        verdict: check.verdict,
    })
}

/// Estimated probability that an opening of `b` passes the full P3 check
/// when Alice committed to `a`, using the best flipped opening when the
/// bits differ.
pub fn p3_estimate_pstar(params: &P3Params, a: u8, b: u8, trials: u64, seed: u64) -> Result<f64> {
    let attack = if (a ^ b) & 1 == 0 { P3Attack::None } else { P3Attack::WrongBasis };
    acceptance(params, attack, b, trials, seed)
}

/// The same estimate for an Alice who postpones every measurement until
/// unveil; both bits pass.
pub fn p3_estimate_pstar_control(params: &P3Params, b: u8, trials: u64, seed: u64) -> Result<f64> {
    acceptance(params, P3Attack::Deferred, b, trials, seed)
}

fn acceptance(params: &P3Params, attack: P3Attack, b: u8, trials: u64, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    let mut ok = 0u64;
    for t in 0..trials {
        ok += run_p3_trial(params, attack, b, &SeedTree::trial(seed, t))?.verdict.accepted as u64;
    }
    Ok(ok as f64 / trials as f64)
}
