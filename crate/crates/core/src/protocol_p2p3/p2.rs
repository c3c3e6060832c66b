//! Protocol P2: evidence randomised by the receiver.
//!
//! Alice sends `2n` BB84 states. Bob applies a random basis operation
//! (`I` or `H`) followed by a random Pauli pad to each, shuffles them and
//! sends them back. Alice has Bob reveal his operations on `n` positions of
//! her choice and checks them; she then measures the other `n` in the
//! basis of her bit (`Z` for 0, `X` for 1) and announces the outcomes `M`.
//! To unveil she reveals the bit and her preparation record, from which Bob
//! derives what each measured qubit was and checks `M` against it.

use crate::classical::{FailureReason, Permutation, Verdict};
use crate::error::{Error, Result};
use crate::qcore::{Basis, Bb84State, BellState, Gate, PauliBits, PauliKey, QuantumStore, Qubit};
use crate::rng::{SeedTree, Stream};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P2Params {
    pub n: usize,
}

impl P2Params {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        Ok(Self { n })
    }
}

/// Alice's record of the `2n` states she prepared.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepRecord {
    pub states: Vec<Bb84State>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisOp {
    I,
    H,
}

/// One of Bob's eight per-qubit actions: a basis operation then a pad.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BobAction {
    pub op: BasisOp,
    pub pad: PauliBits,
}

impl BobAction {
    /// In the order II, IX, IY, IZ, HI, HX, HY, HZ.
    pub const ALL: [BobAction; 8] = {
        const fn a(op: BasisOp, x: bool, z: bool) -> BobAction {
            BobAction { op, pad: PauliBits { x, z } }
        }
        [
            a(BasisOp::I, false, false),
            a(BasisOp::I, true, false),
            a(BasisOp::I, true, true),
            a(BasisOp::I, false, true),
            a(BasisOp::H, false, false),
            a(BasisOp::H, true, false),
            a(BasisOp::H, true, true),
            a(BasisOp::H, false, true),
        ]
    };

    pub fn label(self) -> String {
        let op = match self.op {
            BasisOp::I => 'I',
            BasisOp::H => 'H',
        };
        let pad = match (self.pad.x, self.pad.z) {
            (false, false) => 'I',
            (true, false) => 'X',
            (true, true) => 'Y',
            (false, true) => 'Z',
        };
        format!("{op}{pad}")
    }

    /// Effect on a BB84 state, up to global phase.
    pub fn act(self, s: Bb84State) -> Bb84State {
        let s = match self.op {
            BasisOp::I => s,
            BasisOp::H => Bb84State::new(s.basis.other(), s.bit),
        };
        self.pad.act(s)
    }

    pub fn apply(self, store: &mut QuantumStore, q: Qubit) -> Result<()> {
        if self.op == BasisOp::H {
            store.apply_gate(q, Gate::H)?;
        }
        store.encrypt(q, self.pad)
    }

    /// Inverse of [`BobAction::apply`] up to global phase.
    pub fn undo(self, store: &mut QuantumStore, q: Qubit) -> Result<()> {
        store.encrypt(q, self.pad)?;
        if self.op == BasisOp::H {
            store.apply_gate(q, Gate::H)?;
        }
        Ok(())
    }
}

/// Bob's private randomisation: per-origin actions and the shuffle sending
/// origin `k` to outbound position `permutation[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobRandomization {
    pub basis_ops: Vec<BasisOp>,
    pub pad: PauliKey,
    pub permutation: Permutation,
}

impl BobRandomization {
    pub fn random<R: Rng + ?Sized>(len: usize, scramble: bool, rng: &mut R) -> Self {
        let basis_ops = (0..len).map(|_| if rng.random() { BasisOp::H } else { BasisOp::I }).collect();
        let pad = PauliKey::random(len, rng);
        let permutation = if scramble { Permutation::random(len, rng) } else { Permutation::identity(len) };
        Self { basis_ops, pad, permutation }
    }

    pub fn len(&self) -> usize {
        self.basis_ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis_ops.is_empty()
    }

    pub fn action(&self, origin: usize) -> BobAction {
        BobAction { op: self.basis_ops[origin], pad: self.pad.get(origin) }
    }

    /// Origin of the qubit at outbound position `p`.
    pub fn origin(&self, p: usize) -> usize {
        self.permutation.inverse().apply(p)
    }

    fn is_consistent(&self) -> bool {
        self.pad.len() == self.len() && self.permutation.len() == self.len()
    }
}

/// How Bob treats the qubits he receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BobBehavior {
    Honest,
    /// Discards the inbound qubits and returns fresh random BB84 states,
    /// still revealing his nominal randomisation when asked.
    SubstituteRandom,
    /// Measures each inbound qubit in `Z` before randomising it.
    MeasureZ,
}

pub fn p2_alice_prepare<R: Rng + ?Sized>(
    params: &P2Params,
    store: &mut QuantumStore,
    rng: &mut R,
) -> (PrepRecord, Vec<Qubit>) {
    let states: Vec<Bb84State> = (0..2 * params.n).map(|_| Bb84State::random(rng)).collect();
    let qubits = states.iter().map(|s| store.prepare(*s)).collect();
    (PrepRecord { states }, qubits)
}

pub fn p2_bob_randomize<R: Rng + ?Sized>(
    inbound: &[Qubit],
    behavior: BobBehavior,
    scramble: bool,
    store: &mut QuantumStore,
    rng: &mut R,
) -> Result<(BobRandomization, Vec<Qubit>)> {
    let r = BobRandomization::random(inbound.len(), scramble, rng);
    let out = match behavior {
        BobBehavior::Honest => p2_bob_randomize_with(inbound, &r, store)?,
        BobBehavior::MeasureZ => {
            for &q in inbound {
                store.measure(q, Basis::Z, rng)?;
            }
            p2_bob_randomize_with(inbound, &r, store)?
        }
        BobBehavior::SubstituteRandom => {
            let fresh: Vec<Qubit> = inbound.iter().map(|_| store.prepare(Bb84State::random(rng))).collect();
            r.permutation.permute(&fresh)
        }
    };
    Ok((r, out))
}

/// Applies a given randomisation.
pub fn p2_bob_randomize_with(
    inbound: &[Qubit],
    r: &BobRandomization,
    store: &mut QuantumStore,
) -> Result<Vec<Qubit>> {
    if inbound.len() != r.len() || !r.is_consistent() {
        return Err(Error::DimensionMismatch { expected: r.len(), actual: inbound.len() });
    }
    for (k, &q) in inbound.iter().enumerate() {
        r.action(k).apply(store, q)?;
    }
    Ok(r.permutation.permute(inbound))
}

/// Result of Alice's check on Bob's randomisation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckPhase {
    pub pass: bool,
    pub failures: usize,
    /// Outbound positions Bob had to reveal, ascending.
    pub check_positions: Vec<usize>,
    /// The remaining positions, ascending; these carry the evidence.
    pub evidence_positions: Vec<usize>,
    #[serde(skip)]
    pub survivors: Vec<Qubit>,
}

fn split_positions<R: Rng + ?Sized>(received: &[Qubit], rng: &mut R) -> (Vec<usize>, Vec<usize>, Vec<Qubit>) {
    let total = received.len();
    let mut check = index::sample(rng, total, total / 2).into_vec();
    check.sort_unstable();
    let evidence: Vec<usize> = (0..total).filter(|p| check.binary_search(p).is_err()).collect();
    let survivors = evidence.iter().map(|&p| received[p]).collect();
    (check, evidence, survivors)
}

/// Alice picks half of the positions, has Bob reveal origin and action for
/// each, undoes the action and tests for the state she prepared.
pub fn p2_check_phase<R: Rng + ?Sized>(
    record: &PrepRecord,
    received: &[Qubit],
    revealed: &BobRandomization,
    store: &mut QuantumStore,
    rng: &mut R,
) -> Result<CheckPhase> {
    if received.len() != record.states.len() || revealed.len() != received.len() {
        return Err(Error::DimensionMismatch { expected: record.states.len(), actual: received.len() });
    }
    let (check_positions, evidence_positions, survivors) = split_positions(received, rng);
    let inv = revealed.permutation.inverse();
    let mut failures = 0;
    for &p in &check_positions {
        let k = inv.apply(p);
        let q = received[p];
        revealed.action(k).undo(store, q)?;
        if !store.check_bb84(q, record.states[k], rng)? {
            failures += 1;
        }
    }
    Ok(CheckPhase { pass: failures == 0, failures, check_positions, evidence_positions, survivors })
}

/// Position selection without any test, for a committer who does not care
/// whether Bob behaved.
pub fn p2_check_phase_waived<R: Rng + ?Sized>(received: &[Qubit], rng: &mut R) -> CheckPhase {
    let (check_positions, evidence_positions, survivors) = split_positions(received, rng);
    CheckPhase { pass: true, failures: 0, check_positions, evidence_positions, survivors }
}

/// Alice's announced measurement outcomes. Fixed once created.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceString {
    bits: Vec<u8>,
}

impl EvidenceString {
    pub fn new(bits: Vec<u8>) -> Self {
        Self { bits: bits.into_iter().map(|b| b & 1).collect() }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// Measures every surviving qubit in the basis of `a`.
pub fn p2_alice_commit<R: Rng + ?Sized>(
    a: u8,
    survivors: &[Qubit],
    store: &mut QuantumStore,
    rng: &mut R,
) -> Result<EvidenceString> {
    let basis = Basis::from_bit(a);
    let bits = survivors.iter().map(|&q| store.measure(q, basis, rng)).collect::<Result<Vec<u8>>>()?;
    Ok(EvidenceString::new(bits))
}

/// Bob's view of what each evidence qubit was before Alice measured it.
pub fn reconstruct_evidence_states(
    record: &PrepRecord,
    bob: &BobRandomization,
    evidence_positions: &[usize],
) -> Result<Vec<Bb84State>> {
    if record.states.len() != bob.len() || !bob.is_consistent() {
        return Err(Error::DimensionMismatch { expected: bob.len(), actual: record.states.len() });
    }
    let inv = bob.permutation.inverse();
    evidence_positions
        .iter()
        .map(|&p| {
            if p >= bob.len() {
                return Err(Error::QubitOutOfRange { target: p, n_qubits: bob.len() });
            }
            let k = inv.apply(p);
            Ok(bob.action(k).act(record.states[k]))
        })
        .collect()
}

/// Rejects if any evidence qubit was an eigenstate of the basis of `a`
/// opposite to the announced outcome.
pub fn p2_bob_verify(
    a: u8,
    record: &PrepRecord,
    evidence: &EvidenceString,
    bob: &BobRandomization,
    evidence_positions: &[usize],
) -> Verdict {
    if evidence.len() != evidence_positions.len() {
        return Verdict::reject(FailureReason::Malformed);
    }
    let Ok(states) = reconstruct_evidence_states(record, bob, evidence_positions) else {
        return Verdict::reject(FailureReason::Malformed);
    };
    let basis = Basis::from_bit(a);
    let clash = states.iter().zip(evidence.bits()).any(|(s, &m)| s.basis == basis && s.bit != m);
    if clash {
        Verdict::reject(FailureReason::EvidenceMismatch)
    } else {
        Verdict::accept()
    }
}

/// Committer behaviours simulated end to end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum P2Attack {
    None,
    /// Commit honestly to the other bit and unveil the target with the
    /// same outcomes.
    WrongBasis,
    /// Keep entangled partners, Bell-measure at commit, choose claims at
    /// unveil. Bob does not shuffle.
    BellNoScramble,
    /// The same attack against a receiver who shuffles.
    BellScrambled,
}

impl P2Attack {
    fn scramble(self) -> bool {
        self != P2Attack::BellNoScramble
    }

    fn is_bell(self) -> bool {
        matches!(self, P2Attack::BellNoScramble | P2Attack::BellScrambled)
    }
}

/// State of a P2 run after the commit phase.
pub(crate) struct CommitSession {
    pub store: QuantumStore,
    pub committed_bit: Option<u8>,
    pub record: Option<PrepRecord>,
    pub randomization: BobRandomization,
    pub check: CheckPhase,
    pub evidence: EvidenceString,
    pub bell: Option<BellMemory>,
}

/// What the Bell attacker remembers from commit.
pub(crate) struct BellMemory {
    pub outcomes: Vec<BellState>,
}

/// Runs preparation, randomisation, check phase and commit measurement.
/// `commit_bit` is ignored by the Bell attacks.
pub(crate) fn commit_session(params: &P2Params, attack: P2Attack, commit_bit: u8, seeds: &SeedTree) -> Result<CommitSession> {
    let mut store = QuantumStore::new();
    let mut prep_rng = seeds.rng(Stream::AlicePrepare);
    let mut bob_rng = seeds.rng(Stream::BobRandomize);
    let mut check_rng = seeds.rng(Stream::CheckPhase);
    let mut measure_rng = seeds.rng(Stream::AliceMeasure);

    if attack.is_bell() {
        let pairs: Vec<(Qubit, Qubit)> = (0..2 * params.n).map(|_| store.bell_pair()).collect();
        let sent: Vec<Qubit> = pairs.iter().map(|p| p.1).collect();
        let (randomization, received) =
            p2_bob_randomize(&sent, BobBehavior::Honest, attack.scramble(), &mut store, &mut bob_rng)?;
        let check = p2_check_phase_waived(&received, &mut check_rng);
        // Alice pairs kept half p with returned position p, assuming no shuffle.
        let mut outcomes = Vec::with_capacity(check.evidence_positions.len());
        let mut bits = Vec::with_capacity(check.evidence_positions.len());
        for &p in &check.evidence_positions {
            outcomes.push(store.bell_measure(pairs[p].0, received[p], &mut measure_rng)?);
            bits.push(measure_rng.random::<bool>() as u8);
        }
        return Ok(CommitSession {
            store,
            committed_bit: None,
            record: None,
            randomization,
            check,
            evidence: EvidenceString::new(bits),
            bell: Some(BellMemory { outcomes }),
        });
    }

    let a = commit_bit & 1;
    let (record, sent) = p2_alice_prepare(params, &mut store, &mut prep_rng);
    let (randomization, received) = p2_bob_randomize(&sent, BobBehavior::Honest, true, &mut store, &mut bob_rng)?;
    let check = p2_check_phase(&record, &received, &randomization, &mut store, &mut check_rng)?;
    let evidence = p2_alice_commit(a, &check.survivors, &mut store, &mut measure_rng)?;
    Ok(CommitSession {
        store,
        committed_bit: Some(a),
        record: Some(record),
        randomization,
        check,
        evidence,
        bell: None,
    })
}

/// The record a Bell attacker claims when unveiling `target`.
pub(crate) fn bell_claims(session: &CommitSession, target: u8) -> Result<PrepRecord> {
    let memory = session.bell.as_ref().ok_or_else(|| Error::InvalidState("not a Bell session".into()))?;
    let mut states = vec![Bb84State::ZERO; session.randomization.len()];
    for (j, &p) in session.check.evidence_positions.iter().enumerate() {
        states[p] = super::bell::claim_for(memory.outcomes[j], session.evidence.bits()[j], target)?;
    }
    Ok(PrepRecord { states })
}

/// Everything observable about one P2 run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P2Trial {
    pub committed_bit: Option<u8>,
    pub unveiled_bit: u8,
    pub record: PrepRecord,
    pub randomization: BobRandomization,
    pub check: CheckPhase,
    pub evidence: EvidenceString,
    pub bell_outcomes: Option<Vec<BellState>>,
    pub verdict: Verdict,
}

/// Runs one trial; `bit` is the committed bit for an honest run and the
/// unveil target for attacks.
pub fn run_p2_trial(params: &P2Params, attack: P2Attack, bit: u8, seeds: &SeedTree) -> Result<P2Trial> {
    let bit = bit & 1;
    let commit_bit = if attack == P2Attack::WrongBasis { bit ^ 1 } else { bit };
    let session = commit_session(params, attack, commit_bit, seeds)?;
    let record = match &session.record {
        Some(r) => r.clone(),
        None => bell_claims(&session, bit)?,
    };
    let verdict =
        p2_bob_verify(bit, &record, &session.evidence, &session.randomization, &session.check.evidence_positions);
    Ok(P2Trial {
        committed_bit: session.committed_bit,
        unveiled_bit: bit,
        record,
        randomization: session.randomization,
        check: session.check,
        evidence: session.evidence,
        bell_outcomes: session.bell.map(|b| b.outcomes),
        verdict,
    })
}

pub fn p2_attack_bell_no_scramble(params: &P2Params, target_bit: u8, seeds: &SeedTree) -> Result<Verdict> {
    Ok(run_p2_trial(params, P2Attack::BellNoScramble, target_bit, seeds)?.verdict)
}

/// Fraction of check-phase runs in which Alice catches a misbehaving Bob.
pub fn p2_check_detection_rate(params: &P2Params, behavior: BobBehavior, trials: u64, seed: u64) -> Result<f64> {
    let mut caught = 0u64;
    for t in 0..trials {
        let seeds = SeedTree::trial(seed, t);
        let mut store = QuantumStore::new();
        let (record, sent) = p2_alice_prepare(params, &mut store, &mut seeds.rng(Stream::AlicePrepare));
        let (r, received) = p2_bob_randomize(&sent, behavior, true, &mut store, &mut seeds.rng(Stream::BobRandomize))?;
        let check = p2_check_phase(&record, &received, &r, &mut store, &mut seeds.rng(Stream::CheckPhase))?;
        caught += (!check.pass) as u64;
    }
    Ok(caught as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn classical_action_matches_quantum_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for action in BobAction::ALL {
            for s in Bb84State::ALL {
                let mut store = QuantumStore::new();
                let q = store.prepare(s);
                action.apply(&mut store, q).unwrap();
                let out = store.single_state(q).unwrap().unwrap();
                assert!(out.equals_up_to_phase(&action.act(s).register(), 1e-12), "{} {s:?}", action.label());
                action.undo(&mut store, q).unwrap();
                assert!(store.check_bb84(q, s, &mut rng).unwrap());
            }
        }
    }

    #[test]
    fn honest_action_table() {
        // Rows: actions II..HZ; columns: |0>, |1>, |+>, |->.
        let table = [
            ["0", "1", "+", "-"],
            ["1", "0", "+", "-"],
            ["1", "0", "-", "+"],
            ["0", "1", "-", "+"],
            ["+", "-", "0", "1"],
            ["+", "-", "1", "0"],
            ["-", "+", "1", "0"],
            ["-", "+", "0", "1"],
        ];
        for (row, action) in table.iter().zip(BobAction::ALL) {
            for (want, s) in row.iter().zip(Bb84State::ALL) {
                assert_eq!(action.act(s).label(), *want, "{} on {}", action.label(), s.label());
            }
        }
    }

    #[test]
    fn honest_runs_accept() {
        let p = P2Params::new(6).unwrap();
        for t in 0..300 {
            let trial = run_p2_trial(&p, P2Attack::None, (t % 2) as u8, &SeedTree::trial(9, t)).unwrap();
            assert!(trial.check.pass);
            assert!(trial.verdict.accepted);
            assert_eq!(trial.evidence.len(), 6);
        }
    }

    #[test]
    fn malformed_unveil() {
        let p = P2Params::new(3).unwrap();
        let trial = run_p2_trial(&p, P2Attack::None, 0, &SeedTree::new(1)).unwrap();
        let mut short = trial.record.clone();
        short.states.pop();
        let v = p2_bob_verify(0, &short, &trial.evidence, &trial.randomization, &trial.check.evidence_positions);
        assert_eq!(v.failure_reason, FailureReason::Malformed);
        let m = EvidenceString::new(vec![0; 2]);
        let v = p2_bob_verify(0, &trial.record, &m, &trial.randomization, &trial.check.evidence_positions);
        assert_eq!(v.failure_reason, FailureReason::Malformed);
    }

    #[test]
    fn honest_bob_passes_check() {
        let p = P2Params::new(4).unwrap();
        assert_eq!(p2_check_detection_rate(&p, BobBehavior::Honest, 200, 3).unwrap(), 0.0);
    }

    #[test]
    fn wrong_basis_rejections_are_evidence_mismatches() {
        let p = P2Params::new(8).unwrap();
        for t in 0..200 {
            let trial = run_p2_trial(&p, P2Attack::WrongBasis, 1, &SeedTree::trial(4, t)).unwrap();
            assert_eq!(trial.committed_bit, Some(0));
            if !trial.verdict.accepted {
                assert_eq!(trial.verdict.failure_reason, FailureReason::EvidenceMismatch);
            }
        }
    }
}
