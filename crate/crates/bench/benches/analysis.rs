use criterion::{criterion_group, criterion_main, Criterion};
use qbc_core::analysis::{
    fidelity_bound, mixture_fidelity, model_fidelity, truncated_binomial_ratio_bound, upsilon, SymmetricEvidence,
};
use qbc_core::protocol_p1::evidence_density;
use qbc_core::Bb84State;
use std::hint::black_box;

fn closed_forms(c: &mut Criterion) {
    c.bench_function("fidelity_bound_grid", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for n in 1..=4 {
                for q in n..=24 {
                    acc += fidelity_bound(q, n).unwrap();
                }
            }
            black_box(acc)
        })
    });
    c.bench_function("upsilon_256_16", |b| b.iter(|| upsilon(black_box(256), black_box(16)).unwrap()));
    c.bench_function("model_fidelity_256_16", |b| b.iter(|| model_fidelity(black_box(256), black_box(16)).unwrap()));
    c.bench_function("truncated_binomial_60_5", |b| b.iter(|| truncated_binomial_ratio_bound(60, 5).unwrap()));
}

fn mixtures(c: &mut Criterion) {
    let commit = [Bb84State::ZERO.register(), Bb84State::PLUS.register()];
    c.bench_function("dense_evidence_density_n2_q6", |b| b.iter(|| evidence_density(&commit, 6).unwrap()));
    c.bench_function("symmetric_fidelity_n2_q40", |b| {
        b.iter(|| {
            let e = SymmetricEvidence::new(&commit, 40).unwrap();
            black_box(qbc_core::analysis::symmetric_fidelity(&e, &SymmetricEvidence::maximally_mixed(42)).unwrap())
        })
    });
    c.bench_function("mixture_fidelity_n3_q6", |b| {
        let regs = vec![Bb84State::ZERO.register(); 3];
        b.iter(|| mixture_fidelity(&regs, 6).unwrap())
    });
}

criterion_group!(benches, closed_forms, mixtures);
criterion_main!(benches);
