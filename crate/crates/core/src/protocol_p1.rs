//! Protocol P1: commitment by hiding one of two BB84 sets among
//! one-time-padded decoys.
//!
//! Bob sends two sets of `n` BB84 states plus `Q` extra states. To commit
//! to `a`, Alice pads the extras with Pauli keys, interleaves set `a` with
//! them, shuffles the `n + Q` qubits and returns them as evidence, keeping
//! the other set. To unveil she reveals the shuffle, the keys, where set `a`
//! ended up, and hands back the kept set.

use crate::classical::{FailureReason, Permutation, Verdict};
use crate::error::{Error, Result};
use crate::qcore::gate::{Mat2, C0};
use crate::qcore::{Basis, Bb84State, DensityMatrix, PauliKey, QuantumStore, Qubit, Register};
use crate::rng::{SeedTree, Stream};
use crate::steering::{solve_cheat_unitary, CheatUnitary, Ensemble};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest evidence size for which dense density matrices are built.
pub const MAX_DENSE_QUBITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P1Params {
    pub n: usize,
    pub q: usize,
    pub memoryless: bool,
}

impl P1Params {
    pub fn new(n: usize, q: usize, memoryless: bool) -> Result<Self> {
        if n == 0 || q < n {
            return Err(Error::InvalidParams(format!("P1 needs 1 <= n <= Q, got n={n}, Q={q}")));
        }
        Ok(Self { n, q, memoryless })
    }

    /// Number of evidence qubits.
    pub fn total(&self) -> usize {
        self.n + self.q
    }
}

/// Bob's private preparation record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P1BobSecrets {
    pub states0: Vec<Bb84State>,
    pub states1: Vec<Bb84State>,
    pub extra_states: Vec<Bb84State>,
}

impl P1BobSecrets {
    pub fn random<R: Rng + ?Sized>(params: &P1Params, rng: &mut R) -> Self {
        let mut draw = |k| (0..k).map(|_| Bb84State::random(rng)).collect::<Vec<_>>();
        Self { states0: draw(params.n), states1: draw(params.n), extra_states: draw(params.q) }
    }

    pub fn commit_states(&self, a: u8) -> &[Bb84State] {
        if a & 1 == 0 {
            &self.states0
        } else {
            &self.states1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetLabel {
    Set0(usize),
    Set1(usize),
    Extra(usize),
}

/// Bob's first message: labelled qubits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct P1Outbound {
    pub qubits: Vec<Qubit>,
    pub labels: Vec<SetLabel>,
}

impl P1Outbound {
    fn collect(&self, pick: impl Fn(SetLabel) -> Option<usize>, len: usize) -> Result<Vec<Qubit>> {
        let mut out = vec![None; len];
        for (q, l) in self.qubits.iter().zip(&self.labels) {
            if let Some(i) = pick(*l) {
                let slot = out.get_mut(i).ok_or_else(|| Error::InvalidParams(format!("label {l:?} out of range")))?;
                *slot = Some(*q);
            }
        }
        out.into_iter().map(|q| q.ok_or_else(|| Error::InvalidParams("missing labelled qubit".into()))).collect()
    }

    pub fn set(&self, a: u8, n: usize) -> Result<Vec<Qubit>> {
        self.collect(
            |l| match (l, a & 1) {
                (SetLabel::Set0(j), 0) | (SetLabel::Set1(j), 1) => Some(j),
                _ => None,
            },
            n,
        )
    }

    pub fn extras(&self, q: usize) -> Result<Vec<Qubit>> {
        self.collect(|l| if let SetLabel::Extra(j) = l { Some(j) } else { None }, q)
    }
}

/// Prepares fresh random sets and sends them.
pub fn p1_bob_prepare<R: Rng + ?Sized>(
    params: &P1Params,
    store: &mut QuantumStore,
    rng: &mut R,
) -> (P1BobSecrets, P1Outbound) {
    let secrets = P1BobSecrets::random(params, rng);
    let out = p1_bob_send(&secrets, store);
    (secrets, out)
}

/// Sends the qubits described by `secrets`: set 0, set 1, then the extras.
pub fn p1_bob_send(secrets: &P1BobSecrets, store: &mut QuantumStore) -> P1Outbound {
    let mut qubits = Vec::new();
    let mut labels = Vec::new();
    type Group<'a> = (&'a [Bb84State], fn(usize) -> SetLabel);
    let groups: [Group; 3] = [
        (&secrets.states0, SetLabel::Set0),
        (&secrets.states1, SetLabel::Set1),
        (&secrets.extra_states, SetLabel::Extra),
    ];
    for (states, label) in groups {
        for (j, s) in states.iter().enumerate() {
            qubits.push(store.prepare(*s));
            labels.push(label(j));
        }
    }
    P1Outbound { qubits, labels }
}

/// Alice's classical choices during commit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitChoices {
    /// Sorted pre-shuffle positions of the committed set.
    pub insert_positions: Vec<usize>,
    pub permutation: Permutation,
    pub decoy_key: PauliKey,
}

impl CommitChoices {
    pub fn random<R: Rng + ?Sized>(params: &P1Params, rng: &mut R) -> Self {
        let mut insert_positions = index::sample(rng, params.total(), params.n).into_vec();
        insert_positions.sort_unstable();
        let permutation = Permutation::random(params.total(), rng);
        let decoy_key = PauliKey::random(params.q, rng);
        Self { insert_positions, permutation, decoy_key }
    }

    /// Evidence positions of the committed qubits.
    pub fn positions(&self) -> Vec<usize> {
        self.insert_positions.iter().map(|&i| self.permutation.apply(i)).collect()
    }

    fn validate(&self, params: &P1Params) -> Result<()> {
        let ok = self.insert_positions.len() == params.n
            && self.insert_positions.windows(2).all(|w| w[0] < w[1])
            && self.insert_positions.last().is_none_or(|&p| p < params.total())
            && self.permutation.len() == params.total()
            && self.decoy_key.len() == params.q;
        if !ok {
            return Err(Error::InvalidParams("commit choices do not fit the parameters".into()));
        }
        Ok(())
    }
}

/// Pre-shuffle positions not used by the committed set, ascending; decoy
/// `q` sits at the `q`-th of them.
fn decoy_slots(total: usize, insert_positions: &[usize]) -> Vec<usize> {
    (0..total).filter(|p| insert_positions.binary_search(p).is_err()).collect()
}

/// What Alice keeps after committing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct P1AliceSecrets {
    pub a: u8,
    pub choices: CommitChoices,
    pub kept: Vec<Qubit>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct P1Evidence {
    pub qubits: Vec<Qubit>,
}

pub fn p1_alice_commit<R: Rng + ?Sized>(
    a: u8,
    params: &P1Params,
    inbound: &P1Outbound,
    store: &mut QuantumStore,
    rng: &mut R,
) -> Result<(P1AliceSecrets, P1Evidence)> {
    let choices = CommitChoices::random(params, rng);
    p1_alice_commit_with(a, params, inbound, choices, store)
}

/// Commit with explicit choices.
pub fn p1_alice_commit_with(
    a: u8,
    params: &P1Params,
    inbound: &P1Outbound,
    choices: CommitChoices,
    store: &mut QuantumStore,
) -> Result<(P1AliceSecrets, P1Evidence)> {
    choices.validate(params)?;
    let a = a & 1;
    let committed = inbound.set(a, params.n)?;
    let kept = inbound.set(a ^ 1, params.n)?;
    let extras = inbound.extras(params.q)?;
    for (q, &qb) in extras.iter().enumerate() {
        store.encrypt(qb, choices.decoy_key.get(q))?;
    }
    let mut pre = Vec::with_capacity(params.total());
    let (mut ci, mut ei) = (committed.iter(), extras.iter());
    for p in 0..params.total() {
        let next = if choices.insert_positions.binary_search(&p).is_ok() { ci.next() } else { ei.next() };
        pre.push(*next.expect("counts match"));
    }
    let evidence = P1Evidence { qubits: choices.permutation.permute(&pre) };
    Ok((P1AliceSecrets { a, choices, kept }, evidence))
}

/// Alice's unveil message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct P1Opening {
    pub a: u8,
    pub permutation: Permutation,
    pub decoy_key: PauliKey,
    pub positions: Vec<usize>,
    pub returned_noncommit: Vec<Qubit>,
}

impl P1Opening {
    pub fn classical(&self) -> P1OpeningRecord {
        P1OpeningRecord {
            a: self.a,
            permutation: self.permutation.clone(),
            decoy_key: self.decoy_key.clone(),
            positions: self.positions.clone(),
        }
    }
}

/// The classical part of an opening.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P1OpeningRecord {
    pub a: u8,
    pub permutation: Permutation,
    pub decoy_key: PauliKey,
    pub positions: Vec<usize>,
}

pub fn p1_alice_open(secrets: &P1AliceSecrets) -> P1Opening {
    P1Opening {
        a: secrets.a,
        permutation: secrets.choices.permutation.clone(),
        decoy_key: secrets.choices.decoy_key.clone(),
        positions: secrets.choices.positions(),
        returned_noncommit: secrets.kept.clone(),
    }
}

/// Outcomes of the memoryless receiver, who measures every evidence qubit
/// in a random basis as soon as it arrives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureNowRecord {
    pub bases: Vec<Basis>,
    pub outcomes: Vec<u8>,
}

pub fn p1_bob_measure_now<R: Rng + ?Sized>(
    evidence: &P1Evidence,
    store: &mut QuantumStore,
    rng: &mut R,
) -> Result<MeasureNowRecord> {
    let mut bases = Vec::with_capacity(evidence.qubits.len());
    let mut outcomes = Vec::with_capacity(evidence.qubits.len());
    for &q in &evidence.qubits {
        let b = Basis::random(rng);
        outcomes.push(store.measure(q, b, rng)?);
        bases.push(b);
    }
    Ok(MeasureNowRecord { bases, outcomes })
}

/// Bob's unveil check, reporting the first failing category in the order
/// committed set, non-committed set, decoys. Malformed openings fail as a
/// commit mismatch.
pub fn p1_bob_verify<R: Rng + ?Sized>(
    evidence: &P1Evidence,
    opening: &P1Opening,
    secrets: &P1BobSecrets,
    measured: Option<&MeasureNowRecord>,
    store: &mut QuantumStore,
    rng: &mut R,
) -> Result<Verdict> {
    let n = secrets.states0.len();
    let q = secrets.extra_states.len();
    let total = n + q;
    let well_formed = evidence.qubits.len() == total
        && opening.permutation.len() == total
        && opening.positions.len() == n
        && opening.decoy_key.len() == q
        && opening.returned_noncommit.len() == n
        && opening.positions.iter().all(|&p| p < total)
        && measured.is_none_or(|m| m.bases.len() == total && m.outcomes.len() == total);
    if !well_formed {
        return Ok(Verdict::reject(FailureReason::CommitMismatch));
    }
    let inv = opening.permutation.inverse();
    let pre: Vec<usize> = opening.positions.iter().map(|&w| inv.apply(w)).collect();
    if !pre.windows(2).all(|w| w[0] < w[1]) {
        return Ok(Verdict::reject(FailureReason::CommitMismatch));
    }
    let a = opening.a & 1;

    let commit = secrets.commit_states(a);
    for (j, &w) in opening.positions.iter().enumerate() {
        let ok = match measured {
            Some(m) => m.bases[w] != commit[j].basis || m.outcomes[w] == commit[j].bit,
            None => store.check_bb84(evidence.qubits[w], commit[j], rng)?,
        };
        if !ok {
            return Ok(Verdict::reject(FailureReason::CommitMismatch));
        }
    }

    let other = secrets.commit_states(a ^ 1);
    for (j, &qb) in opening.returned_noncommit.iter().enumerate() {
        if !store.check_bb84(qb, other[j], rng)? {
            return Ok(Verdict::reject(FailureReason::NonCommitMismatch));
        }
    }

    for (k, slot) in decoy_slots(total, &pre).into_iter().enumerate() {
        let pos = opening.permutation.apply(slot);
        let key = opening.decoy_key.get(k);
        let expected = key.act(secrets.extra_states[k]);
        let ok = match measured {
            Some(m) => m.bases[pos] != expected.basis || m.outcomes[pos] == expected.bit,
            None => {
                let qb = evidence.qubits[pos];
                store.encrypt(qb, key)?;
                store.check_bb84(qb, secrets.extra_states[k], rng)?
            }
        };
        if !ok {
            return Ok(Verdict::reject(FailureReason::DecoyMismatch));
        }
    }
    Ok(Verdict::accept())
}

/// Committer behaviours simulated end to end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum P1Attack {
    /// Honest commit and unveil of the given bit.
    None,
    /// Honest commit to the other bit, then unveil of the target with the
    /// committed set presented as the target set.
    NaiveFlip,
    /// Both sets inserted into the evidence, displacing decoys.
    BothInsert,
    /// A commitment deferred on a classical coin with `P(0) = gamma0_sq`.
    Superposition { gamma0_sq: f64 },
}

/// Everything observable about one P1 run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1Trial {
    pub secrets: P1BobSecrets,
    pub committed_bit: Option<u8>,
    pub opening: P1OpeningRecord,
    pub measure_now: Option<MeasureNowRecord>,
    pub verdict: Verdict,
}

impl P1Trial {
    pub fn unveiled_bit(&self) -> u8 {
        self.opening.a
    }
}

/// Runs one trial; `bit` is the committed bit for an honest run and the
/// unveil target for attacks. Bob's states come from the seed tree.
pub fn run_p1_trial(params: &P1Params, attack: P1Attack, bit: u8, seeds: &SeedTree) -> Result<P1Trial> {
    let secrets = P1BobSecrets::random(params, &mut seeds.rng(Stream::BobPrepare));
    run_p1_trial_with(params, attack, bit, secrets, seeds)
}

/// As [`run_p1_trial`] with Bob's states fixed by the caller.
pub fn run_p1_trial_with(
    params: &P1Params,
    attack: P1Attack,
    bit: u8,
    secrets: P1BobSecrets,
    seeds: &SeedTree,
) -> Result<P1Trial> {
    let bit = bit & 1;
    let mut store = QuantumStore::new();
    let inbound = p1_bob_send(&secrets, &mut store);
    let mut commit_rng = seeds.rng(Stream::AliceCommit);

    let (committed_bit, evidence, opening) = match attack {
        P1Attack::None | P1Attack::NaiveFlip | P1Attack::Superposition { .. } => {
            let a = match attack {
                P1Attack::None => bit,
                P1Attack::NaiveFlip => bit ^ 1,
                P1Attack::Superposition { gamma0_sq } => {
                    if !(0.0..=1.0).contains(&gamma0_sq) {
                        return Err(Error::InvalidParams(format!("gamma0_sq = {gamma0_sq}")));
                    }
                    (seeds.rng(Stream::Attack).random::<f64>() >= gamma0_sq) as u8
                }
                P1Attack::BothInsert => unreachable!(),
            };
            let (alice, evidence) = p1_alice_commit(a, params, &inbound, &mut store, &mut commit_rng)?;
            let mut opening = p1_alice_open(&alice);
            if attack == P1Attack::NaiveFlip {
                opening.a = bit;
            }
            (Some(a), evidence, opening)
        }
        P1Attack::BothInsert => {
            let (evidence, opening) = both_insert_commit(bit, params, &inbound, &mut store, &mut commit_rng)?;
            (None, evidence, opening)
        }
    };

    let measure_now = if params.memoryless {
        Some(p1_bob_measure_now(&evidence, &mut store, &mut seeds.rng(Stream::BobMeasureNow))?)
    } else {
        None
    };
    let verdict = p1_bob_verify(
        &evidence,
        &opening,
        &secrets,
        measure_now.as_ref(),
        &mut store,
        &mut seeds.rng(Stream::BobVerify),
    )?;
    Ok(P1Trial { secrets, committed_bit, opening: opening.classical(), measure_now, verdict })
}

/// Places the target set as the committed set and the other set in `n`
/// decoy slots; the extras displaced from those slots are returned as the
/// non-committed set.
fn both_insert_commit<R: Rng + ?Sized>(
    target: u8,
    params: &P1Params,
    inbound: &P1Outbound,
    store: &mut QuantumStore,
    rng: &mut R,
) -> Result<(P1Evidence, P1Opening)> {
    let choices = CommitChoices::random(params, rng);
    let mut displaced = index::sample(rng, params.q, params.n).into_vec();
    displaced.sort_unstable();
    let target_set = inbound.set(target, params.n)?;
    let other_set = inbound.set(target ^ 1, params.n)?;
    let extras = inbound.extras(params.q)?;

    let mut slot_content = Vec::with_capacity(params.q);
    let mut others = other_set.iter();
    for (k, &e) in extras.iter().enumerate() {
        if displaced.binary_search(&k).is_ok() {
            slot_content.push(*others.next().expect("n displaced slots"));
        } else {
            store.encrypt(e, choices.decoy_key.get(k))?;
            slot_content.push(e);
        }
    }
    let mut pre = Vec::with_capacity(params.total());
    let (mut ti, mut si) = (target_set.iter(), slot_content.iter());
    for p in 0..params.total() {
        let next = if choices.insert_positions.binary_search(&p).is_ok() { ti.next() } else { si.next() };
        pre.push(*next.expect("counts match"));
    }
    let evidence = P1Evidence { qubits: choices.permutation.permute(&pre) };
    let opening = P1Opening {
        a: target,
        permutation: choices.permutation.clone(),
        decoy_key: choices.decoy_key.clone(),
        positions: choices.positions(),
        returned_noncommit: displaced.iter().map(|&k| extras[k]).collect(),
    };
    Ok((evidence, opening))
}

pub fn p1_attack_naive_flip(params: &P1Params, target_bit: u8, seeds: &SeedTree) -> Result<Verdict> {
    Ok(run_p1_trial(params, P1Attack::NaiveFlip, target_bit, seeds)?.verdict)
}

pub fn p1_attack_both_insert(params: &P1Params, target_bit: u8, seeds: &SeedTree) -> Result<Verdict> {
    Ok(run_p1_trial(params, P1Attack::BothInsert, target_bit, seeds)?.verdict)
}

/// Returns the unveiled bit and the verdict.
pub fn p1_attack_superposition(params: &P1Params, gamma0_sq: f64, seeds: &SeedTree) -> Result<(u8, Verdict)> {
    let t = run_p1_trial(params, P1Attack::Superposition { gamma0_sq }, 0, seeds)?;
    Ok((t.unveiled_bit(), t.verdict))
}

/// Density matrix of the evidence for bit `a`, averaged over the shuffle and
/// the decoy keys.
pub fn p1_evidence_density(params: &P1Params, a: u8, secrets: &P1BobSecrets) -> Result<DensityMatrix> {
    let states: Vec<Register> = secrets.commit_states(a).iter().map(|s| s.register()).collect();
    if states.len() != params.n {
        return Err(Error::InvalidParams("secrets do not match parameters".into()));
    }
    evidence_density(&states, params.q)
}

/// Evidence density for committed single-qubit states `commit` hidden among
/// `decoys` fully mixed qubits under a uniformly random ordering.
///
/// Writing each committed projector as `I/2 + D_j`, the uniform average over
/// injective placements expands into terms `D_{j1} ⊗ ... ⊗ D_{js}` on `s`
/// distinct positions, each added as a sparse Kronecker product.
pub fn evidence_density(commit: &[Register], decoys: usize) -> Result<DensityMatrix> {
    let n = commit.len();
    let total = n + decoys;
    if total == 0 {
        return Err(Error::InvalidParams("empty evidence".into()));
    }
    if total > MAX_DENSE_QUBITS {
        return Err(Error::TooLarge(format!("{total} evidence qubits (limit {MAX_DENSE_QUBITS})")));
    }
    let mut deltas = Vec::with_capacity(n);
    for r in commit {
        if r.n_qubits() != 1 {
            return Err(Error::DimensionMismatch { expected: 2, actual: r.dim() });
        }
        let v = r.amplitudes();
        let half = Complex64::new(0.5, 0.0);
        deltas.push([[v[0] * v[0].conj() - half, v[0] * v[1].conj()], [v[1] * v[0].conj(), v[1] * v[1].conj() - half]]);
    }
    let identical = deltas.windows(2).all(|w| max_diff(&w[0], &w[1]) < 1e-15);
    let dim = 1usize << total;
    let work: f64 = (1..=n)
        .map(|s| {
            let placements = if identical { binom(total, s) } else { binom(n, s) * falling(total, s) };
            placements * (1u64 << s) as f64
        })
        .sum::<f64>()
        * dim as f64;
    if work > 4e9 {
        return Err(Error::TooLarge(format!("dense evidence expansion needs ~{work:.1e} operations")));
    }

    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let base = 0.5f64.powi(total as i32);
    for i in 0..dim {
        m[(i, i)] = Complex64::new(base, 0.0);
    }
    for s in 1..=n {
        let scale = 0.5f64.powi((total - s) as i32);
        if identical {
            let coef = scale * binom(n, s) / binom(total, s);
            let ds: Vec<&Mat2> = vec![&deltas[0]; s];
            for_each_combination(total, s, &mut |pos| add_term(&mut m, total, pos, &ds, coef));
        } else {
            let coef = scale / falling(total, s);
            for_each_combination(n, s, &mut |subset| {
                let ds: Vec<&Mat2> = subset.iter().map(|&j| &deltas[j]).collect();
                for_each_injection(total, s, &mut |pos| add_term(&mut m, total, pos, &ds, coef));
            });
        }
    }
    DensityMatrix::new(m)
}

fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut d = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            d = d.max((a[r][c] - b[r][c]).norm());
        }
    }
    d
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64)
}

fn for_each_combination(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

fn for_each_injection(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, k: usize, used: &mut [bool], cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, k, used, cur, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(n, k, &mut vec![false; n], &mut Vec::with_capacity(k), f);
}

/// Adds `coef * (⊗_i ds[i] at positions[i]) ⊗ I elsewhere` to `m`.
fn add_term(m: &mut DMatrix<Complex64>, total: usize, positions: &[usize], ds: &[&Mat2], coef: f64) {
    let s = positions.len();
    let masks: Vec<usize> = positions.iter().map(|&p| 1usize << (total - 1 - p)).collect();
    let clear: usize = masks.iter().fold(0, |acc, mk| acc | mk);
    let coef = Complex64::new(coef, 0.0);
    for r in 0..(1usize << total) {
        let rest = r & !clear;
        for assign in 0..(1usize << s) {
            let mut c = rest;
            let mut val = coef;
            for i in 0..s {
                let rb = (r & masks[i] != 0) as usize;
                let cb = (assign >> i) & 1;
                if cb == 1 {
                    c |= masks[i];
                }
                val *= ds[i][rb][cb];
                if val == C0 {
                    break;
                }
            }
            if val != C0 {
                m[(r, c)] += val;
            }
        }
    }
}

/// Ensembles a receiver would see if each committed qubit were replaced by
/// an even mixture of a state and its orthogonal partner; both have density
/// `I/2`, so a cheat unitary always exists between them.
pub fn idealized_commit_ensembles(phi0: Bb84State, phi1: Bb84State) -> Result<[Ensemble; 2]> {
    Ok([Ensemble::uniform_bb84(&[phi0, phi0.flipped()])?, Ensemble::uniform_bb84(&[phi1, phi1.flipped()])?])
}

/// The cheat unitary between the idealised ensembles for one choice of
/// states. Different choices need different unitaries, and Alice does not
/// know the choice.
pub fn idealized_cheat_unitary(phi0: Bb84State, phi1: Bb84State) -> Result<CheatUnitary> {
    let [e0, e1] = idealized_commit_ensembles(phi0, phi1)?;
    solve_cheat_unitary(&e0, &e1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::fidelity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, q: usize) -> P1Params {
        P1Params::new(n, q, false).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(P1Params::new(0, 4, false).is_err());
        assert!(P1Params::new(5, 4, false).is_err());
    }

    #[test]
    fn honest_runs_accept() {
        for memoryless in [false, true] {
            let p = P1Params::new(3, 7, memoryless).unwrap();
            for t in 0..200 {
                let trial = run_p1_trial(&p, P1Attack::None, (t % 2) as u8, &SeedTree::trial(1, t)).unwrap();
                assert!(trial.verdict.accepted, "{memoryless} {t}");
                assert_eq!(trial.unveiled_bit(), (t % 2) as u8);
            }
        }
    }

    #[test]
    fn forced_choices_place_commit_set() {
        let p = params(2, 3);
        let mut store = QuantumStore::new();
        let secrets = P1BobSecrets {
            states0: vec![Bb84State::ZERO, Bb84State::PLUS],
            states1: vec![Bb84State::ONE, Bb84State::MINUS],
            extra_states: vec![Bb84State::ZERO; 3],
        };
        let inbound = p1_bob_send(&secrets, &mut store);
        let choices = CommitChoices {
            insert_positions: vec![1, 3],
            permutation: Permutation::identity(5),
            decoy_key: PauliKey::identity(3),
        };
        let (alice, ev) = p1_alice_commit_with(1, &p, &inbound, choices, &mut store).unwrap();
        assert_eq!(alice.choices.positions(), vec![1, 3]);
        let set1 = inbound.set(1, 2).unwrap();
        assert_eq!(ev.qubits[1], set1[0]);
        assert_eq!(ev.qubits[3], set1[1]);
        let opening = p1_alice_open(&alice);
        let v = p1_bob_verify(&ev, &opening, &secrets, None, &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(v.accepted);
    }

    #[test]
    fn shuffled_positions_must_keep_order() {
        let p = params(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = QuantumStore::new();
        let (secrets, inbound) = p1_bob_prepare(&p, &mut store, &mut rng);
        let (alice, ev) = p1_alice_commit(0, &p, &inbound, &mut store, &mut rng).unwrap();
        let mut opening = p1_alice_open(&alice);
        opening.positions.swap(0, 1);
        let v = p1_bob_verify(&ev, &opening, &secrets, None, &mut store, &mut rng).unwrap();
        assert_eq!(v.failure_reason, FailureReason::CommitMismatch);
    }

    #[test]
    fn wrong_key_is_caught_as_decoy_mismatch() {
        let p = params(1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut caught = 0;
        for _ in 0..200 {
            let mut store = QuantumStore::new();
            let (secrets, inbound) = p1_bob_prepare(&p, &mut store, &mut rng);
            let (alice, ev) = p1_alice_commit(1, &p, &inbound, &mut store, &mut rng).unwrap();
            let mut opening = p1_alice_open(&alice);
            opening.decoy_key = PauliKey::random(6, &mut rng);
            let v = p1_bob_verify(&ev, &opening, &secrets, None, &mut store, &mut rng).unwrap();
            if !v.accepted {
                assert_eq!(v.failure_reason, FailureReason::DecoyMismatch);
                caught += 1;
            }
        }
        assert!(caught > 150);
    }

    #[test]
    fn malformed_opening_is_commit_mismatch() {
        let p = params(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = QuantumStore::new();
        let (secrets, inbound) = p1_bob_prepare(&p, &mut store, &mut rng);
        let (alice, ev) = p1_alice_commit(0, &p, &inbound, &mut store, &mut rng).unwrap();
        let mut opening = p1_alice_open(&alice);
        opening.positions.pop();
        let v = p1_bob_verify(&ev, &opening, &secrets, None, &mut store, &mut rng).unwrap();
        assert_eq!(v.failure_reason, FailureReason::CommitMismatch);
    }

    #[test]
    fn naive_flip_with_identical_sets_passes() {
        // With states0 == states1 the flip is undetectable.
        let p = params(3, 3);
        let states = vec![Bb84State::PLUS, Bb84State::ONE, Bb84State::ZERO];
        let secrets = P1BobSecrets { states0: states.clone(), states1: states, extra_states: vec![Bb84State::MINUS; 3] };
        for t in 0..50 {
            let trial = run_p1_trial_with(&p, P1Attack::NaiveFlip, 1, secrets.clone(), &SeedTree::trial(2, t)).unwrap();
            assert!(trial.verdict.accepted);
        }
    }

    #[test]
    fn naive_flip_with_orthogonal_sets_fails_on_commit() {
        let p = params(2, 2);
        let secrets = P1BobSecrets {
            states0: vec![Bb84State::ZERO, Bb84State::PLUS],
            states1: vec![Bb84State::ONE, Bb84State::MINUS],
            extra_states: vec![Bb84State::ZERO; 2],
        };
        for t in 0..50 {
            let trial = run_p1_trial_with(&p, P1Attack::NaiveFlip, 0, secrets.clone(), &SeedTree::trial(3, t)).unwrap();
            assert_eq!(trial.verdict.failure_reason, FailureReason::CommitMismatch);
        }
    }

    #[test]
    fn both_insert_fails_after_commit_check() {
        let p = params(4, 16);
        let mut rejected = 0;
        for t in 0..300 {
            let trial = run_p1_trial(&p, P1Attack::BothInsert, (t % 2) as u8, &SeedTree::trial(4, t)).unwrap();
            if !trial.verdict.accepted {
                rejected += 1;
                assert_ne!(trial.verdict.failure_reason, FailureReason::CommitMismatch);
            }
        }
        assert!(rejected > 280, "{rejected}");
    }

    #[test]
    fn superposition_follows_weights() {
        let p = params(2, 4);
        let mut zeros = 0;
        for t in 0..2000 {
            let (b, v) = p1_attack_superposition(&p, 0.25, &SeedTree::trial(5, t)).unwrap();
            assert!(v.accepted);
            zeros += (b == 0) as usize;
        }
        let f = zeros as f64 / 2000.0;
        assert!((f - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / 2000.0).sqrt());
        assert!(p1_attack_superposition(&p, 1.5, &SeedTree::new(0)).is_err());
    }

    #[test]
    fn density_of_single_commit_among_one_decoy() {
        let rho = evidence_density(&[Bb84State::ZERO.register()], 1).unwrap();
        let expect = [0.5, 0.25, 0.25, 0.0];
        for (r, &diag) in expect.iter().enumerate() {
            for c in 0..4 {
                let want = if r == c { diag } else { 0.0 };
                assert!((rho.entry(r, c).re - want).abs() < 1e-15 && rho.entry(r, c).im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn density_without_commit_is_fully_mixed() {
        let rho = evidence_density(&[], 4).unwrap();
        assert!(rho.max_abs_diff(&DensityMatrix::maximally_mixed(4)).unwrap() < 1e-15);
    }

    #[test]
    fn density_size_limit() {
        assert!(matches!(evidence_density(&[Bb84State::ZERO.register()], 12), Err(Error::TooLarge(_))));
    }

    /// Brute-force oracle: average of the explicit product states over every
    /// ordering of commit and decoy slots, with decoys averaged over keys.
    fn brute_density(commit: &[Bb84State], decoys: usize) -> DMatrix<Complex64> {
        let total = commit.len() + decoys;
        let mut acc = DMatrix::<Complex64>::zeros(1 << total, 1 << total);
        let mut count = 0.0;
        let mut perm: Vec<usize> = (0..total).collect();
        // Heap's algorithm over all orderings of slot contents.
        fn heap(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if k <= 1 {
                f(perm);
                return;
            }
            for i in 0..k {
                heap(k - 1, perm, f);
                let j = if k % 2 == 0 { i } else { 0 };
                perm.swap(j, k - 1);
            }
        }
        let mixed = DMatrix::from_diagonal_element(2, 2, Complex64::new(0.5, 0.0));
        heap(total, &mut perm, &mut |order| {
            let mut m = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
            for &slot in order {
                let f = if slot < commit.len() {
                    commit[slot].register().density().into_matrix()
                } else {
                    mixed.clone()
                };
                m = m.kronecker(&f);
            }
            acc += m;
            count += 1.0;
        });
        acc / Complex64::new(count, 0.0)
    }

    #[test]
    fn density_matches_brute_force() {
        let cases: &[(&[Bb84State], usize)] = &[
            (&[Bb84State::PLUS], 2),
            (&[Bb84State::ZERO, Bb84State::MINUS], 2),
            (&[Bb84State::ONE, Bb84State::ONE], 3),
            (&[Bb84State::PLUS, Bb84State::ZERO, Bb84State::ONE], 2),
        ];
        for (commit, decoys) in cases {
            let regs: Vec<Register> = commit.iter().map(|s| s.register()).collect();
            let fast = evidence_density(&regs, *decoys).unwrap();
            let slow = brute_density(commit, *decoys);
            let diff = fast.matrix().iter().zip(slow.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-14, "{commit:?} {decoys}: {diff}");
        }
    }

    #[test]
    fn idealized_unitary_depends_on_bob_choice() {
        let mut solutions = Vec::new();
        let mut choices = Vec::new();
        for phi0 in Bb84State::ALL {
            for phi1 in Bb84State::ALL {
                let u = idealized_cheat_unitary(phi0, phi1).unwrap();
                let [e0, e1] = idealized_commit_ensembles(phi0, phi1).unwrap();
                assert!(u.residual(&e0, &e1) < 1e-12);
                solutions.push(u);
                choices.push((e0, e1));
            }
        }
        // No single unitary works for every choice.
        for u in &solutions {
            let worst = choices.iter().map(|(e0, e1)| u.residual(e0, e1)).fold(0.0, f64::max);
            assert!(worst > 1e-3);
        }
        let distinct = solutions.iter().any(|u| solutions.iter().any(|v| u.distance(v) > 1e-3));
        assert!(distinct);
        // The idealised densities coincide, so fidelity is one.
        let [e0, e1] = idealized_commit_ensembles(Bb84State::ZERO, Bb84State::PLUS).unwrap();
        let f = fidelity(&crate::steering::ensemble_density(&e0), &crate::steering::ensemble_density(&e1)).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }
}
