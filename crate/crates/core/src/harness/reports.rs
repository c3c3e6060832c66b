//! Bounds tables and the steering demonstration.

use super::{with_pool, TrialStats};
use crate::analysis::{compare_with_mixture_oracle, BoundReport};
use crate::error::Result;
use crate::qcore::Bb84State;
use crate::rng::{mix, SeedTree, Stream};
use crate::steering::{solve_cheat_unitary, steering_trial, SteeringPreset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;
use std::path::Path;

/// Rows with `n + Q` up to this size get an exact-mixture oracle value.
pub const BOUNDS_ORACLE_LIMIT: usize = 12;

/// One report per feasible `(n, Q)`, `n` outermost; pairs with `Q < n` are
/// skipped. The oracle uses `|0>` for every committed qubit.
pub fn bound_reports(n_range: RangeInclusive<usize>, q_range: RangeInclusive<usize>) -> Result<Vec<BoundReport>> {
    let mut rows = Vec::new();
    for n in n_range.filter(|&n| n >= 1) {
        for q in q_range.clone().filter(|&q| q >= n) {
            let row = if n + q <= BOUNDS_ORACLE_LIMIT {
                compare_with_mixture_oracle(q, n, &vec![Bb84State::ZERO; n])?
            } else {
                BoundReport::model_only(q, n)?
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Writes [`bound_reports`] as CSV with header
/// `Q,n,bound,upsilon,model_fidelity,oracle_fidelity`.
pub fn emit_bounds_table(
    n_range: RangeInclusive<usize>,
    q_range: RangeInclusive<usize>,
    output_path: &Path,
) -> Result<Vec<BoundReport>> {
    let rows = bound_reports(n_range, q_range)?;
    write_bounds_csv(&rows, std::fs::File::create(output_path)?)?;
    Ok(rows)
}

/// Writes report rows as CSV to any sink.
pub fn write_bounds_csv<W: std::io::Write>(rows: &[BoundReport], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["Q", "n", "bound", "upsilon", "model_fidelity", "oracle_fidelity"])?;
    for r in rows {
        w.write_record([
            r.q.to_string(),
            r.n.to_string(),
            r.bound.to_string(),
            r.upsilon.to_string(),
            r.model_fidelity.to_string(),
            r.oracle_fidelity.map(|f| f.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-bit acceptance of the steering attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringReport {
    pub preset: String,
    /// Acceptance when steering towards bit 0 and bit 1.
    pub per_bit: [TrialStats; 2],
    /// How far the solved unitary is from mapping one ensemble onto the other.
    pub residual: f64,
}

/// Builds the preset's ensembles from `seed`, solves for the cheat unitary
/// and runs `trials` steering rounds per target bit against the toy
/// receiver. Unequal densities surface as `DensitiesDiffer`.
pub fn steering_demo(preset: SteeringPreset, trials: u64, seed: u64) -> Result<SteeringReport> {
    let ensembles = preset.ensembles(&mut SeedTree::new(seed).rng(Stream::Steering))?;
    let u = solve_cheat_unitary(&ensembles[0], &ensembles[1])?;
    let residual = u.residual(&ensembles[0], &ensembles[1]);
    let run_bit = |bit: u8| -> Result<TrialStats> {
        let master = mix(seed, bit as u64);
        let accepted = with_pool(|| {
            (0..trials)
                .into_par_iter()
                .map(|t| steering_trial(&ensembles, &u, bit, &mut SeedTree::trial(master, t).rng(Stream::Steering)))
                .collect::<Result<Vec<bool>>>()
        })??;
        let count = accepted.iter().filter(|&&a| a).count() as u64;
        let mut unveils = [0u64; 2];
        unveils[bit as usize] = count;
        Ok(TrialStats::from_counts(trials, count, unveils))
    };
    Ok(SteeringReport { preset: preset.name().to_string(), per_bit: [run_bit(0)?, run_bit(1)?], residual })
}
