//! Seeded Monte Carlo experiments over the protocols, with statistics,
//! transcripts and report tables.
//!
//! Trial `i` of an experiment with master seed `s` uses the seed tree
//! `SeedTree::trial(s, i)` (SplitMix64 mixing, see [`crate::rng::mix`]), so
//! results do not depend on how trials are scheduled across workers.

mod reports;
mod transcript;

pub use reports::{
    bound_reports, emit_bounds_table, steering_demo, write_bounds_csv, SteeringReport, BOUNDS_ORACLE_LIMIT,
};
pub use transcript::{recompute_verdict, replay_transcripts, Message, Party, ReplayMode, ReplayReport, TrialTranscript};

use crate::error::{Error, Result};
use crate::protocol_p1::{run_p1_trial, P1Attack, P1Params};
use crate::protocol_p2p3::{run_p2_trial, run_p3_trial, P2Attack, P2Params, P3Attack, P3Params};
use crate::rng::{SeedTree, Stream};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "QBC_LAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    P1,
    P2,
    P3,
}

/// Committer strategies selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    NaiveFlip,
    BothInsert,
    Superposition,
    WrongBasis,
    BellNoScramble,
    BellScrambled,
    FlipRedraw,
    Deferred,
}

impl AttackKind {
    pub const ALL: [AttackKind; 8] = [
        AttackKind::NaiveFlip,
        AttackKind::BothInsert,
        AttackKind::Superposition,
        AttackKind::WrongBasis,
        AttackKind::BellNoScramble,
        AttackKind::BellScrambled,
        AttackKind::FlipRedraw,
        AttackKind::Deferred,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::NaiveFlip => "naive_flip",
            AttackKind::BothInsert => "both_insert",
            AttackKind::Superposition => "superposition",
            AttackKind::WrongBasis => "wrong_basis",
            AttackKind::BellNoScramble => "bell_no_scramble",
            AttackKind::BellScrambled => "bell_scrambled",
            AttackKind::FlipRedraw => "flip_redraw",
            AttackKind::Deferred => "deferred",
        }
    }

    pub fn supports(self, protocol: Protocol) -> bool {
        use AttackKind::*;
        match protocol {
            Protocol::P1 => matches!(self, NaiveFlip | BothInsert | Superposition),
            Protocol::P2 => matches!(self, WrongBasis | BellNoScramble | BellScrambled),
            Protocol::P3 => matches!(self, WrongBasis | FlipRedraw | Deferred),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::P1 => "p1",
            Protocol::P2 => "p2",
            Protocol::P3 => "p3",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Protocol::P1),
            "p2" => Ok(Protocol::P2),
            "p3" => Ok(Protocol::P3),
            _ => Err(Error::Config(format!("unknown protocol '{s}' (expected p1, p2 or p3)"))),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        AttackKind::ALL.into_iter().find(|a| a.name() == key).ok_or_else(|| {
            let names: Vec<&str> = AttackKind::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!("unknown attack '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// Everything that determines an experiment. Output paths are not part of
/// the echoed configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub attack: Option<AttackKind>,
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub trials: u64,
    pub seed: u64,
    /// Committed bit (honest runs) or unveil target (attacks); drawn per
    /// trial when absent.
    pub bit: Option<u8>,
    pub gamma0_sq: Option<f64>,
    pub memoryless: bool,
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
    #[serde(skip)]
    pub transcript_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol, n: usize, trials: u64, seed: u64) -> Self {
        Self {
            protocol,
            attack: None,
            n,
            q: n,
            trials,
            seed,
            bit: None,
            gamma0_sq: None,
            memoryless: false,
            output_path: None,
            transcript_path: None,
        }
    }

    pub fn with_attack(mut self, attack: AttackKind) -> Self {
        self.attack = Some(attack);
        self
    }

    pub fn with_q(mut self, q: usize) -> Self {
        self.q = q;
        self
    }

    pub fn with_bit(mut self, bit: u8) -> Self {
        self.bit = Some(bit);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if let Some(b) = self.bit {
            if b > 1 {
                return bad(format!("bit must be 0 or 1, got {b}"));
            }
        }
        if let Some(a) = self.attack {
            if !a.supports(self.protocol) {
                return bad(format!("attack {a} is not defined for {}", self.protocol));
            }
        }
        let superposition = self.attack == Some(AttackKind::Superposition);
        match (superposition, self.gamma0_sq) {
            (true, None) => return bad("superposition needs gamma0_sq".into()),
            (false, Some(_)) => return bad("gamma0_sq is only valid with the superposition attack".into()),
            (true, Some(g)) if !(0.0..=1.0).contains(&g) => return bad(format!("gamma0_sq = {g} outside [0, 1]")),
            _ => {}
        }
        match self.protocol {
            Protocol::P1 => {
                if self.q < self.n {
                    return bad(format!("P1 needs Q >= n, got Q={}, n={}", self.q, self.n));
                }
            }
            Protocol::P2 | Protocol::P3 => {
                if self.memoryless {
                    return bad("memoryless applies to P1 only".into());
                }
                if self.protocol == Protocol::P3 && self.n % 2 != 0 {
                    return bad(format!("P3 needs even n, got {}", self.n));
                }
            }
        }
        Ok(())
    }
}

/// Acceptance counts of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: u64,
    pub accept_count: u64,
    /// Trials in which bit 0 and bit 1 were unveiled.
    pub unveil_counts: [u64; 2],
    pub rate: f64,
    /// Binomial standard error `sqrt(rate (1 - rate) / trials)`.
    pub stderr: f64,
}

impl TrialStats {
    pub fn from_counts(trials: u64, accept_count: u64, unveil_counts: [u64; 2]) -> Self {
        let rate = if trials == 0 { 0.0 } else { accept_count as f64 / trials as f64 };
        let stderr = if trials == 0 { 0.0 } else { (rate * (1.0 - rate) / trials as f64).sqrt() };
        Self { trials, accept_count, unveil_counts, rate, stderr }
    }

    /// Fraction of trials that unveiled `bit`.
    pub fn unveil_frequency(&self, bit: u8) -> f64 {
        self.unveil_counts[bit as usize & 1] as f64 / self.trials.max(1) as f64
    }

    /// Whether `rate` lies within `k` standard errors of `p`, using the
    /// standard error implied by `p` itself.
    pub fn consistent_with(&self, p: f64, k: f64) -> bool {
        let sigma = (p * (1.0 - p) / self.trials.max(1) as f64).sqrt();
        (self.rate - p).abs() <= k * sigma + 1e-12
    }
}

/// One trial's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub accepted: bool,
    pub unveiled_bit: u8,
    pub transcript: Option<TrialTranscript>,
}

/// Runs trial `index` of `config`.
pub fn run_trial(config: &ExperimentConfig, index: u64, with_transcript: bool) -> Result<TrialOutcome> {
    let seeds = SeedTree::trial(config.seed, index);
    let bit = config.bit.unwrap_or_else(|| seeds.rng(Stream::Choice).random::<bool>() as u8);
    match config.protocol {
        Protocol::P1 => {
            let params = P1Params::new(config.n, config.q, config.memoryless)?;
            let attack = match config.attack {
                None => P1Attack::None,
                Some(AttackKind::NaiveFlip) => P1Attack::NaiveFlip,
                Some(AttackKind::BothInsert) => P1Attack::BothInsert,
                Some(AttackKind::Superposition) => P1Attack::Superposition {
                    gamma0_sq: config.gamma0_sq.ok_or_else(|| Error::Config("missing gamma0_sq".into()))?,
                },
                Some(a) => return Err(Error::Config(format!("attack {a} is not defined for p1"))),
            };
            let t = run_p1_trial(&params, attack, bit, &seeds)?;
            Ok(TrialOutcome {
                accepted: t.verdict.accepted,
                unveiled_bit: t.unveiled_bit(),
                transcript: with_transcript.then(|| transcript::from_p1(index, &seeds, &params, &t)),
            })
        }
        Protocol::P2 => {
            let params = P2Params::new(config.n)?;
            let attack = match config.attack {
                None => P2Attack::None,
                Some(AttackKind::WrongBasis) => P2Attack::WrongBasis,
                Some(AttackKind::BellNoScramble) => P2Attack::BellNoScramble,
                Some(AttackKind::BellScrambled) => P2Attack::BellScrambled,
                Some(a) => return Err(Error::Config(format!("attack {a} is not defined for p2"))),
            };
            let t = run_p2_trial(&params, attack, bit, &seeds)?;
            Ok(TrialOutcome {
                accepted: t.verdict.accepted,
                unveiled_bit: t.unveiled_bit,
                transcript: with_transcript.then(|| transcript::from_p2(index, &seeds, &t)),
            })
        }
        Protocol::P3 => {
            let params = P3Params::new(config.n)?;
            let attack = match config.attack {
                None => P3Attack::None,
                Some(AttackKind::WrongBasis) => P3Attack::WrongBasis,
                Some(AttackKind::FlipRedraw) => P3Attack::FlipRedraw,
                Some(AttackKind::Deferred) => P3Attack::Deferred,
                Some(a) => return Err(Error::Config(format!("attack {a} is not defined for p3"))),
            };
            let t = run_p3_trial(&params, attack, bit, &seeds)?;
            Ok(TrialOutcome {
                accepted: t.verdict.accepted,
                unveiled_bit: t.unveiled_bit(),
                transcript: with_transcript.then(|| transcript::from_p3(index, &seeds, &params, &t)),
            })
        }
    }
}

/// Worker count: `QBC_LAB_THREADS` if set to a positive integer, otherwise
/// rayon's default.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

pub(crate) fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every trial and returns the aggregate and the per-trial outcomes in
/// trial order. Nothing is written.
pub fn run_trials(config: &ExperimentConfig, with_transcripts: bool) -> Result<(TrialStats, Vec<TrialOutcome>)> {
    config.validate()?;
    let outcomes = with_pool(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|i| run_trial(config, i, with_transcripts))
            .collect::<Result<Vec<_>>>()
    })??;
    let accepted = outcomes.iter().filter(|o| o.accepted).count() as u64;
    let mut unveils = [0u64; 2];
    for o in &outcomes {
        unveils[o.unveiled_bit as usize & 1] += 1;
    }
    Ok((TrialStats::from_counts(config.trials, accepted, unveils), outcomes))
}

#[derive(Serialize)]
struct StatsRecord<'a> {
    config: &'a ExperimentConfig,
    stats: &'a TrialStats,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct TranscriptHeader {
    pub config: ExperimentConfig,
}

/// The single-line JSON record written for an experiment.
pub fn stats_json(config: &ExperimentConfig, stats: &TrialStats) -> Result<String> {
    Ok(serde_json::to_string(&StatsRecord { config, stats })?)
}

/// Runs the experiment, then writes the stats record to `output_path` and
/// the transcripts to `transcript_path` when they are set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TrialStats> {
    let (stats, outcomes) = run_trials(config, config.transcript_path.is_some())?;
    if let Some(path) = &config.output_path {
        let mut line = stats_json(config, &stats)?;
        line.push('\n');
        std::fs::write(path, line)?;
    }
    if let Some(path) = &config.transcript_path {
        write_transcripts(path, config, &outcomes)?;
    }
    Ok(stats)
}

fn write_transcripts(path: &Path, config: &ExperimentConfig, outcomes: &[TrialOutcome]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &TranscriptHeader { config: config.clone() })?;
    w.write_all(b"\n")?;
    for o in outcomes {
        let t = o.transcript.as_ref().ok_or_else(|| Error::InvalidState("missing transcript".into()))?;
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Expected acceptance rate of a configuration, where known in closed form.
pub fn reference_rate(config: &ExperimentConfig) -> Option<f64> {
    let n = config.n as i32;
    let q34 = 0.75f64.powi(n);
    Some(match (config.protocol, config.attack) {
        (_, None) => 1.0,
        (Protocol::P1, Some(AttackKind::Superposition)) => 1.0,
        (Protocol::P1, Some(AttackKind::NaiveFlip)) => 0.375f64.powi(n),
        (Protocol::P1, Some(AttackKind::BothInsert)) => 0.25f64.powi(n),
        (Protocol::P2, Some(AttackKind::WrongBasis)) => q34,
        (Protocol::P2, Some(AttackKind::BellNoScramble)) => 1.0,
        (Protocol::P3, Some(AttackKind::WrongBasis)) => q34,
        (Protocol::P3, Some(AttackKind::FlipRedraw)) => q34 * 0.75f64.powi(n / 2),
        (Protocol::P3, Some(AttackKind::Deferred)) => 1.0,
        _ => return None,
    })
}
