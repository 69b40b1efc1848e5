use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rally_core::analytics::{compute_metrics, mann_whitney_keyterms, one_way_anova};
use rally_core::fixtures;

fn metrics(c: &mut Criterion) {
    let log = fixtures::summary_log();
    let labels = fixtures::final_summary_labels();
    c.bench_function("compute_metrics summary log", |b| {
        b.iter(|| compute_metrics(black_box(&log), Some(&labels)).unwrap())
    });
}

fn anova(c: &mut Criterion) {
    let groups: Vec<Vec<f64>> = (0..4)
        .map(|g| (0..1000).map(|i| ((i * 7 + g * 13) % 17) as f64).collect())
        .collect();
    c.bench_function("one_way_anova 4x1000", |b| b.iter(|| one_way_anova(black_box(&groups)).unwrap()));
}

fn keyterms(c: &mut Criterion) {
    let doc = |seed: usize| {
        (0..200)
            .map(|i| format!("w{} #t{}", (i * seed) % 97, (i + seed) % 11))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let a: Vec<String> = (1..60).map(doc).collect();
    let b: Vec<String> = (60..180).map(doc).collect();
    c.bench_function("mann_whitney_keyterms 59 vs 120 docs", |bench| {
        bench.iter(|| mann_whitney_keyterms(black_box(&a), black_box(&b), 0.01).unwrap())
    });
}

criterion_group!(benches, metrics, anova, keyterms);
criterion_main!(benches);
