//! Acceptance criteria 1 to 9, run in sequence with one PASS/FAIL line
//! each. Exits non-zero if any criterion fails.

use qbc_core::analysis::{
    compare_with_mixture_oracle, fidelity_bound, model_fidelity, truncated_binomial_ratio_bound,
};
use qbc_core::harness::{
    emit_bounds_table, run_experiment, run_trials, steering_demo, AttackKind, ExperimentConfig, Protocol,
};
use qbc_core::protocol_p1::{run_p1_trial, P1Attack, P1Params};
use qbc_core::protocol_p2p3::{
    p2_hiding_report, p3_estimate_pstar, p3_estimate_pstar_control, run_p2_trial, run_p3_trial, P2Attack, P2Params,
    P3Attack, P3Params,
};
use qbc_core::steering::SteeringPreset;
use qbc_core::{Bb84State, FailureReason, SeedTree};
use num_rational::BigRational;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn within_3_sigma(rate: f64, p: f64, trials: u64) -> bool {
    (rate - p).abs() <= 3.0 * sigma(p, trials) + 1e-12
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let detail = f()?;
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        check(elapsed < limit, format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))?;
    }
    Ok(format!("{detail}; {elapsed:.2?}"))
}

fn criterion_1() -> Outcome {
    timed(Some(Duration::from_secs(10)), || {
        let r = steering_demo(SteeringPreset::Zx, 10_000, 1).map_err(|e| e.to_string())?;
        let (r0, r1) = (r.per_bit[0].rate, r.per_bit[1].rate);
        check(r0 >= 0.999 && r1 >= 0.999, format!("acceptance {r0}, {r1}"))?;
        Ok(format!("steering to bit 0: {r0}, bit 1: {r1} over 10^4 trials each"))
    })
}

fn criterion_2() -> Outcome {
    timed(Some(Duration::from_secs(30)), || {
        let mut parts = Vec::new();
        for (n, target) in [(4usize, 0.3164), (8, 0.1001), (16, 0.01002)] {
            let p = 0.75f64.powi(n as i32);
            check((p - target).abs() < 5e-5, format!("(3/4)^{n} = {p} vs {target}"))?;
            let cfg = ExperimentConfig::new(Protocol::P2, n, 10_000, 200 + n as u64).with_attack(AttackKind::WrongBasis);
            let (stats, _) = run_trials(&cfg, false).map_err(|e| e.to_string())?;
            check(within_3_sigma(stats.rate, p, stats.trials), format!("n={n}: rate {} vs {p}", stats.rate))?;
            parts.push(format!("n={n}: {:.4} vs {p:.4}", stats.rate));
        }
        Ok(parts.join(", "))
    })
}

fn criterion_3() -> Outcome {
    timed(None, || {
        let r = p2_hiding_report(&P2Params::new(8).unwrap(), 10_000, 3).map_err(|e| e.to_string())?;
        check(r.max_mi() <= 0.01, format!("mutual information {} bits", r.max_mi()))?;
        Ok(format!(
            "max per-position I(a; M_j, action) = {:.5} bits, I(a; |M|) = {:.5} bits",
            r.max_position_mi, r.weight_mi
        ))
    })
}

fn criterion_4() -> Outcome {
    timed(None, || {
        let params = P2Params::new(8).unwrap();
        let trials = 10_000u64;
        let mut parts = Vec::new();
        for target in [0u8, 1] {
            let mut ok = 0u64;
            for t in 0..trials {
                ok += run_p2_trial(&params, P2Attack::BellNoScramble, target, &SeedTree::trial(40 + target as u64, t))
                    .map_err(|e| e.to_string())?
                    .verdict
                    .accepted as u64;
            }
            check(ok == trials, format!("unscrambled target {target}: {ok}/{trials}"))?;
        }
        parts.push("unscrambled: 1.0 for both targets".to_string());
        for target in [0u8, 1] {
            let cfg = ExperimentConfig::new(Protocol::P2, 8, trials, 50 + target as u64)
                .with_attack(AttackKind::BellScrambled)
                .with_bit(target);
            let (stats, _) = run_trials(&cfg, false).map_err(|e| e.to_string())?;
            check(
                stats.rate + 3.0 * stats.stderr < 1.0,
                format!("scrambled target {target}: rate {} not 3 sigma below 1", stats.rate),
            )?;
            parts.push(format!("scrambled target {target}: {:.4} ((3/4)^8 = {:.4})", stats.rate, 0.75f64.powi(8)));
        }
        Ok(parts.join(", "))
    })
}

fn criterion_5() -> Outcome {
    timed(Some(Duration::from_secs(5)), || {
        let mut failures = Vec::new();
        for n in 1..=4usize {
            for q in n..=24 {
                let (m, b) = (model_fidelity(q, n).unwrap(), fidelity_bound(q, n).unwrap());
                if m < b {
                    failures.push(format!("model (Q={q}, n={n}) {m:.4} < bound {b:.4}"));
                }
            }
        }
        for n in 1..=2usize {
            for q in n..=10 {
                let r = compare_with_mixture_oracle(q, n, &vec![Bb84State::ZERO; n]).unwrap();
                if r.oracle_respects_bound() != Some(true) {
                    failures.push(format!("oracle (Q={q}, n={n}) {:?} < bound {:.4}", r.oracle_fidelity, r.bound));
                }
            }
        }
        for t in 1..=5usize {
            for big_t in (2 * t)..=60 {
                let (exact, bound): (BigRational, BigRational) = truncated_binomial_ratio_bound(big_t, t).unwrap();
                if exact > bound {
                    failures.push(format!("truncated binomial T={big_t}, t={t}"));
                }
            }
        }
        if failures.is_empty() {
            Ok("model, oracle and truncated-binomial grids respect the bound".into())
        } else {
            Err(failures.join("; "))
        }
    })
}

fn criterion_6() -> Outcome {
    timed(None, || {
        let trials = 10_000u64;
        let mut parts = Vec::new();

        let sup = ExperimentConfig { gamma0_sq: Some(0.5), ..ExperimentConfig::new(Protocol::P1, 4, trials, 60) }
            .with_q(8)
            .with_attack(AttackKind::Superposition);
        let (stats, _) = run_trials(&sup, false).map_err(|e| e.to_string())?;
        let f0 = stats.unveil_frequency(0);
        check(stats.rate == 1.0, format!("superposition acceptance {}", stats.rate))?;
        check(within_3_sigma(f0, 0.5, trials), format!("unveiled 0 with frequency {f0}"))?;
        parts.push(format!("superposition: acceptance 1.0, P(unveil 0) = {f0:.4}"));

        let honest = ExperimentConfig::new(Protocol::P1, 4, trials, 61).with_q(8);
        let (stats, _) = run_trials(&honest, false).map_err(|e| e.to_string())?;
        check(stats.rate == 1.0, format!("honest P1 acceptance {}", stats.rate))?;
        parts.push("honest: 1.0".into());

        // Oracle: average BB84 overlap |<a|b>|^2 over independent uniform pairs.
        let mut mean_overlap = 0.0;
        let mut mean_overlap_sq = 0.0;
        for a in Bb84State::ALL {
            for b in Bb84State::ALL {
                let o = a.register().overlap_sq(&b.register()).unwrap();
                mean_overlap += o / 16.0;
                mean_overlap_sq += o * o / 16.0;
            }
        }
        let n = 8;
        let params = P1Params::new(n, n, false).unwrap();
        let (mut commit_pass, mut accepted) = (0u64, 0u64);
        for t in 0..trials {
            let trial = run_p1_trial(&params, P1Attack::NaiveFlip, (t % 2) as u8, &SeedTree::trial(62, t))
                .map_err(|e| e.to_string())?;
            commit_pass += (trial.verdict.failure_reason != FailureReason::CommitMismatch) as u64;
            accepted += trial.verdict.accepted as u64;
        }
        let p_commit = mean_overlap.powi(n as i32);
        let p_full = mean_overlap_sq.powi(n as i32);
        let r_commit = commit_pass as f64 / trials as f64;
        let r_full = accepted as f64 / trials as f64;
        check(within_3_sigma(r_commit, p_commit, trials), format!("naive flip commit check {r_commit} vs {p_commit}"))?;
        check(within_3_sigma(r_full, p_full, trials), format!("naive flip acceptance {r_full} vs {p_full}"))?;
        parts.push(format!(
            "naive flip n=8: commit check {r_commit:.5} vs {p_commit:.5}, acceptance {r_full:.5} vs {p_full:.5}"
        ));
        Ok(parts.join(", "))
    })
}

fn criterion_7() -> Outcome {
    timed(None, || {
        let params = P3Params::new(8).unwrap();
        let trials = 10_000u64;
        let mut parts = Vec::new();
        for a in [0u8, 1] {
            let same = p3_estimate_pstar(&params, a, a, trials, 70 + a as u64).map_err(|e| e.to_string())?;
            check(same == 1.0, format!("p*({a}) = {same} for the committed bit"))?;
            let flipped = p3_estimate_pstar(&params, a, a ^ 1, trials, 72 + a as u64).map_err(|e| e.to_string())?;
            check(
                flipped + 3.0 * sigma(flipped, trials) < 1.0,
                format!("p*({}) = {flipped} for the flipped bit", a ^ 1),
            )?;
            parts.push(format!("commit {a}: p*(same) = 1.0, p*(flipped) = {flipped:.4}"));
        }
        let c0 = p3_estimate_pstar_control(&params, 0, trials, 74).map_err(|e| e.to_string())?;
        let c1 = p3_estimate_pstar_control(&params, 1, trials, 75).map_err(|e| e.to_string())?;
        let spread = 3.0 * (sigma(c0, trials).powi(2) + sigma(c1, trials).powi(2)).sqrt();
        check((c0 - c1).abs() <= spread + 1e-12, format!("control {c0} vs {c1}"))?;
        parts.push(format!("deferred control: {c0:.4} / {c1:.4}"));
        Ok(parts.join(", "))
    })
}

fn criterion_8() -> Outcome {
    timed(None, || {
        let p2 = P2Params::new(8).unwrap();
        let p3 = P3Params::new(8).unwrap();
        let trials = 2_000u64;
        let mut parts = Vec::new();
        for (label, a2, a3) in [("honest", P2Attack::None, P3Attack::None), ("wrong basis", P2Attack::WrongBasis, P3Attack::WrongBasis)] {
            let (mut ok2, mut ok3) = (0u64, 0u64);
            for t in 0..trials {
                let seeds = SeedTree::trial(80, t);
                let bit = (t % 2) as u8;
                let v2 = run_p2_trial(&p2, a2, bit, &seeds).map_err(|e| e.to_string())?.verdict;
                let v3 = run_p3_trial(&p3, a3, bit, &seeds).map_err(|e| e.to_string())?.bb84_verdict;
                check(v2 == v3, format!("{label}: trial {t} differs: {v2:?} vs {v3:?}"))?;
                ok2 += v2.accepted as u64;
                ok3 += v3.accepted as u64;
            }
            check(ok2 == ok3, format!("{label}: {ok2} vs {ok3}"))?;
            parts.push(format!("{label}: {ok2}/{trials} accepted in both"));
        }
        Ok(parts.join(", "))
    })
}

fn criterion_9() -> Outcome {
    timed(None, || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let configs = [
            ExperimentConfig::new(Protocol::P1, 3, 300, 90).with_q(5).with_attack(AttackKind::NaiveFlip),
            ExperimentConfig::new(Protocol::P2, 8, 300, 91).with_attack(AttackKind::BellScrambled),
            ExperimentConfig::new(Protocol::P3, 8, 300, 92).with_attack(AttackKind::FlipRedraw),
        ];
        let mut files = 0;
        for (i, base) in configs.iter().enumerate() {
            let mut outputs = Vec::new();
            for run in 0..2 {
                let mut cfg = base.clone();
                let out = dir.path().join(format!("{i}-{run}.json"));
                let tr = dir.path().join(format!("{i}-{run}.ndjson"));
                cfg.output_path = Some(out.clone());
                cfg.transcript_path = Some(tr.clone());
                run_experiment(&cfg).map_err(|e| e.to_string())?;
                outputs.push((std::fs::read(out).unwrap(), std::fs::read(tr).unwrap()));
            }
            check(outputs[0] == outputs[1], format!("config {i} outputs differ"))?;
            files += 2;
        }
        let tables: Vec<Vec<u8>> = (0..2)
            .map(|run| {
                let p = dir.path().join(format!("bounds-{run}.csv"));
                emit_bounds_table(1..=4, 1..=24, &p).unwrap();
                std::fs::read(p).unwrap()
            })
            .collect();
        check(tables[0] == tables[1], "bounds tables differ")?;
        let s0 = steering_demo(SteeringPreset::Remix, 200, 93).map_err(|e| e.to_string())?;
        let s1 = steering_demo(SteeringPreset::Remix, 200, 93).map_err(|e| e.to_string())?;
        check(
            serde_json::to_string(&s0).unwrap() == serde_json::to_string(&s1).unwrap(),
            "steering reports differ",
        )?;
        Ok(format!("{} experiment files, bounds table and steering report reproduced byte for byte", files * 2))
    })
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = Vec::new();
    for (id, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {id}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {id}: FAIL ({detail})");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} of 9 criteria failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
    println!("acceptance: all 9 criteria passed");
}
