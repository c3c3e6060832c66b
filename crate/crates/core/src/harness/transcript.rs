//! Per-trial message logs and their replay.

use super::{run_trial, ExperimentConfig, Protocol, TranscriptHeader};
use crate::classical::Verdict;
use crate::error::{Error, Result};
use crate::protocol_p1::{MeasureNowRecord, P1BobSecrets, P1OpeningRecord, P1Params, P1Trial};
use crate::protocol_p2p3::{
    p2_bob_verify, p3_classical_verdict, BobRandomization, EvidenceString, P2Trial, P3Evidence, P3Opening,
    P3Params, P3Trial, PrepRecord,
};
use crate::qcore::BellState;
use crate::rng::SeedTree;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Alice,
    Bob,
}

/// One logged step. Steps ending in `_log` are a party's private record
/// rather than something sent to the other side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: Party,
    pub step: String,
    pub payload: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTranscript {
    pub trial: u64,
    pub seed: u64,
    pub messages: Vec<Message>,
    pub verdict: Verdict,
    pub unveiled_bit: u8,
}

impl TrialTranscript {
    pub fn message(&self, step: &str) -> Option<&Message> {
        self.messages.iter().find(|m| m.step == step)
    }

    fn payload<T: DeserializeOwned>(&self, step: &str) -> Result<T> {
        let m = self.message(step).ok_or_else(|| Error::InvalidState(format!("trial {}: no '{step}' step", self.trial)))?;
        Ok(serde_json::from_value(m.payload.clone())?)
    }
}

fn msg<T: Serialize>(sender: Party, step: &str, payload: T) -> Message {
    Message {
        sender,
        step: step.to_string(),
        payload: serde_json::to_value(payload).expect("serializable payload"),
    }
}

pub(crate) fn from_p1(index: u64, seeds: &SeedTree, params: &P1Params, t: &P1Trial) -> TrialTranscript {
    let mut messages = vec![
        msg(Party::Bob, "secrets_log", &t.secrets),
        msg(Party::Bob, "send", json!({ "sets": 2, "set_size": params.n, "extras": params.q })),
        msg(Party::Alice, "commit", json!({ "evidence_qubits": params.total(), "returned_qubits": params.n })),
    ];
    if let Some(m) = &t.measure_now {
        messages.push(msg(Party::Bob, "measure_now_log", m));
    }
    messages.push(msg(Party::Alice, "unveil", &t.opening));
    messages.push(msg(Party::Bob, "verdict", t.verdict));
    TrialTranscript { trial: index, seed: seeds.seed(), messages, verdict: t.verdict, unveiled_bit: t.unveiled_bit() }
}

fn check_reveal(randomization: &BobRandomization, positions: &[usize]) -> Value {
    let entries: Vec<Value> = positions
        .iter()
        .map(|&p| {
            let origin = randomization.origin(p);
            json!({ "position": p, "origin": origin, "action": randomization.action(origin).label() })
        })
        .collect();
    Value::Array(entries)
}

pub(crate) fn from_p2(index: u64, seeds: &SeedTree, t: &P2Trial) -> TrialTranscript {
    let len = t.randomization.len();
    let mut messages = Vec::new();
    if let Some(outcomes) = &t.bell_outcomes {
        messages.push(msg(Party::Alice, "send", json!({ "qubits": len, "entangled": true })));
        messages.push(msg(Party::Bob, "return", json!({ "qubits": len })));
        messages.push(msg(Party::Bob, "randomization_log", &t.randomization));
        messages.push(msg(Party::Alice, "check_result", json!({ "pass": t.check.pass, "waived": true })));
        messages.push(msg(Party::Alice, "bell_log", outcomes));
    } else {
        messages.push(msg(Party::Alice, "send", json!({ "qubits": len })));
        messages.push(msg(Party::Bob, "return", json!({ "qubits": len })));
        messages.push(msg(Party::Bob, "randomization_log", &t.randomization));
        messages.push(msg(Party::Alice, "check_request", &t.check.check_positions));
        messages.push(msg(Party::Bob, "check_reveal", check_reveal(&t.randomization, &t.check.check_positions)));
        messages.push(msg(Party::Alice, "check_result", json!({ "pass": t.check.pass, "failures": t.check.failures })));
    }
    messages.push(msg(
        Party::Alice,
        "commit",
        json!({ "evidence_positions": t.check.evidence_positions, "m": t.evidence.bits() }),
    ));
    messages.push(msg(Party::Alice, "unveil", json!({ "a": t.unveiled_bit, "record": t.record })));
    messages.push(msg(Party::Bob, "verdict", t.verdict));
    TrialTranscript { trial: index, seed: seeds.seed(), messages, verdict: t.verdict, unveiled_bit: t.unveiled_bit }
}

pub(crate) fn from_p3(index: u64, seeds: &SeedTree, params: &P3Params, t: &P3Trial) -> TrialTranscript {
    let len = t.randomization.len();
    let messages = vec![
        msg(Party::Alice, "send", json!({ "qubits": len })),
        msg(Party::Bob, "return", json!({ "qubits": len })),
        msg(Party::Bob, "randomization_log", &t.randomization),
        msg(Party::Alice, "check_request", &t.check.check_positions),
        msg(Party::Bob, "check_reveal", check_reveal(&t.randomization, &t.check.check_positions)),
        msg(Party::Alice, "check_result", json!({ "pass": t.check.pass, "failures": t.check.failures })),
        msg(Party::Bob, "singlet_send", json!({ "pairs": params.half() })),
        msg(
            Party::Alice,
            "commit",
            json!({ "evidence_positions": t.check.evidence_positions, "m1": t.evidence.m1(), "m2": t.evidence.m2() }),
        ),
        msg(Party::Alice, "unveil", &t.opening),
        msg(Party::Bob, "singlet_log", &t.home_outcomes),
        msg(Party::Bob, "verdict", t.verdict),
    ];
    TrialTranscript { trial: index, seed: seeds.seed(), messages, verdict: t.verdict, unveiled_bit: t.opening.a }
}

#[derive(Deserialize)]
struct P2Commit {
    evidence_positions: Vec<usize>,
    m: Vec<u8>,
}

#[derive(Deserialize)]
struct P2Unveil {
    a: u8,
    record: PrepRecord,
}

#[derive(Deserialize)]
struct P3Commit {
    evidence_positions: Vec<usize>,
    m1: Vec<u8>,
    m2: Vec<u8>,
}

/// Recomputes Bob's verdict from the classical payloads of a P2 or P3
/// transcript.
pub fn recompute_verdict(protocol: Protocol, t: &TrialTranscript) -> Result<Verdict> {
    let randomization: BobRandomization = t.payload("randomization_log")?;
    match protocol {
        Protocol::P2 => {
            let commit: P2Commit = t.payload("commit")?;
            let unveil: P2Unveil = t.payload("unveil")?;
            Ok(p2_bob_verify(
                unveil.a,
                &unveil.record,
                &EvidenceString::new(commit.m),
                &randomization,
                &commit.evidence_positions,
            ))
        }
        Protocol::P3 => {
            let commit: P3Commit = t.payload("commit")?;
            let opening: P3Opening = t.payload("unveil")?;
            let home: Vec<u8> = t.payload("singlet_log")?;
            let evidence = P3Evidence::new(commit.m1, commit.m2);
            Ok(p3_classical_verdict(&evidence, &opening, &randomization, &commit.evidence_positions, &home).0)
        }
        Protocol::P1 => Err(Error::InvalidState("P1 verdicts depend on quantum checks".into())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Verdicts recomputed from the logged classical messages.
    Verdicts,
    /// Trials re-simulated from their seeds and compared.
    Statistics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub protocol: Protocol,
    pub mode: ReplayMode,
    pub trials: u64,
    pub matched: u64,
    pub mismatched: Vec<u64>,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        self.mismatched.is_empty() && self.matched == self.trials
    }
}

/// Reads an NDJSON transcript file and checks every trial against it.
pub fn replay_transcripts(path: &Path) -> Result<ReplayReport> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidState("empty transcript file".into()))??;
    let config: ExperimentConfig = serde_json::from_str::<TranscriptHeader>(&header)?.config;
    let mode = if config.protocol == Protocol::P1 { ReplayMode::Statistics } else { ReplayMode::Verdicts };
    let mut report = ReplayReport { protocol: config.protocol, mode, trials: 0, matched: 0, mismatched: Vec::new() };
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TrialTranscript = serde_json::from_str(&line)?;
        report.trials += 1;
        let ok = match mode {
            ReplayMode::Verdicts => recompute_verdict(config.protocol, &t)? == t.verdict,
            ReplayMode::Statistics => {
                let again = run_trial(&config, t.trial, true)?;
                again.transcript.as_ref() == Some(&t)
            }
        };
        if ok {
            report.matched += 1;
        } else {
            report.mismatched.push(t.trial);
        }
    }
    Ok(report)
}

/// Typed views of logged payloads, for callers inspecting transcripts.
impl TrialTranscript {
    pub fn p1_secrets(&self) -> Result<P1BobSecrets> {
        self.payload("secrets_log")
    }

    pub fn p1_opening(&self) -> Result<P1OpeningRecord> {
        self.payload("unveil")
    }

    pub fn p1_measure_now(&self) -> Result<Option<MeasureNowRecord>> {
        match self.message("measure_now_log") {
            Some(m) => Ok(Some(serde_json::from_value(m.payload.clone())?)),
            None => Ok(None),
        }
    }

    pub fn bell_outcomes(&self) -> Result<Option<Vec<BellState>>> {
        match self.message("bell_log") {
            Some(m) => Ok(Some(serde_json::from_value(m.payload.clone())?)),
            None => Ok(None),
        }
    }
}
