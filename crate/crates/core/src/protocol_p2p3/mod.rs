//! Protocols P2 and P3, and the Bell-measurement attack on P2.

pub mod bell;
pub mod p2;
pub mod p3;

pub use bell::{claim_for, consistent_actions, excluded_actions};
pub use p2::{
    p2_alice_commit, p2_alice_prepare, p2_attack_bell_no_scramble, p2_bob_randomize, p2_bob_randomize_with,
    p2_bob_verify, p2_check_detection_rate, p2_check_phase, p2_check_phase_waived, reconstruct_evidence_states,
    run_p2_trial, BasisOp, BobAction, BobBehavior, BobRandomization, CheckPhase, EvidenceString, P2Attack,
    P2Params, P2Trial, PrepRecord,
};
pub use p3::{
    p3_classical_verdict, p3_estimate_pstar, p3_estimate_pstar_control, p3_verify, run_p3_trial, EprCertificate, P3Attack, P3Evidence,
    P3Opening, P3Params, P3Trial, P3Verification,
};

use crate::analysis::mutual_information;
use crate::error::Result;
use crate::rng::{SeedTree, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Plug-in estimates of what Bob's commit-time view says about `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HidingReport {
    pub trials: u64,
    /// Largest, over evidence positions, of `I(a; (M_j, action_j))` in bits,
    /// where `action_j` is Bob's action on the qubit at that position.
    pub max_position_mi: f64,
    /// `I(a; weight(M))` in bits.
    pub weight_mi: f64,
}

impl HidingReport {
    pub fn max_mi(&self) -> f64 {
        self.max_position_mi.max(self.weight_mi)
    }
}

/// Runs honest P2 commitments to uniformly random bits and estimates how
/// much Bob's view reveals about them.
pub fn p2_hiding_report(params: &P2Params, trials: u64, seed: u64) -> Result<HidingReport> {
    let mut per_position: Vec<Vec<(u64, u64)>> = vec![Vec::with_capacity(trials as usize); params.n];
    let mut weights = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let seeds = SeedTree::trial(seed, t);
        let a = seeds.rng(Stream::Choice).random::<bool>() as u8;
        let trial = run_p2_trial(params, P2Attack::None, a, &seeds)?;
        let inv = trial.randomization.permutation.inverse();
        for (j, &p) in trial.check.evidence_positions.iter().enumerate() {
            let action = trial.randomization.action(inv.apply(p));
            let idx = BobAction::ALL.iter().position(|x| *x == action).expect("one of eight") as u64;
            per_position[j].push((a as u64, trial.evidence.bits()[j] as u64 * 8 + idx));
        }
        weights.push((a as u64, trial.evidence.weight() as u64));
    }
    let max_position_mi = per_position.iter().map(|s| mutual_information(s)).fold(0.0, f64::max);
    Ok(HidingReport { trials, max_position_mi, weight_mi: mutual_information(&weights) })
}
