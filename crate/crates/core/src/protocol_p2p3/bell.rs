//! The entanglement attack on P2.
//!
//! Alice sends halves of `|Phi+>` pairs and later Bell-measures each kept
//! half with the qubit Bob returned at the same position. The outcome rules
//! out some of Bob's actions; if she can find a claimed preparation that
//! agrees with every remaining action, she can unveil either bit without
//! having measured anything. Bob's shuffle breaks the pairing.

use super::p2::BobAction;
use crate::error::{Error, Result};
use crate::qcore::{bell_pair, Basis, Bb84State, BellState, Gate};

/// Probability of Bell outcome `outcome` when Bob applied `action` to the
/// second half of `|Phi+>`.
pub fn bell_outcome_probability(action: BobAction, outcome: BellState) -> f64 {
    let mut reg = bell_pair();
    if action.op == super::p2::BasisOp::H {
        reg = reg.apply_1q(Gate::H, 1).expect("two-qubit register");
    }
    reg = reg.apply_matrix(&action.pad.matrix(), 1).expect("two-qubit register");
    outcome.register().overlap_sq(&reg).expect("same width")
}

/// Bob's actions compatible with a Bell outcome.
pub fn consistent_actions(outcome: BellState) -> Vec<BobAction> {
    BobAction::ALL.into_iter().filter(|a| bell_outcome_probability(*a, outcome) > 1e-12).collect()
}

/// Bob's actions ruled out by a Bell outcome.
pub fn excluded_actions(outcome: BellState) -> Vec<BobAction> {
    BobAction::ALL.into_iter().filter(|a| bell_outcome_probability(*a, outcome) <= 1e-12).collect()
}

/// Whether claiming `claim` survives Bob's check of announced bit `m` for
/// unveiled bit `target`, whatever consistent action he applied.
pub fn claim_is_safe(outcome: BellState, m: u8, target: u8, claim: Bb84State) -> bool {
    let basis = Basis::from_bit(target);
    consistent_actions(outcome).into_iter().all(|a| {
        let phi = a.act(claim);
        phi.basis != basis || phi.bit == m
    })
}

/// First safe claim in the order `|0>, |1>, |+>, |->`.
pub fn claim_for(outcome: BellState, m: u8, target: u8) -> Result<Bb84State> {
    Bb84State::ALL
        .into_iter()
        .find(|&c| claim_is_safe(outcome, m & 1, target & 1, c))
        .ok_or_else(|| Error::InvalidState(format!("no safe claim for {outcome:?}, m={m}, target={target}")))
}
