//! Whole-model training-step and inference throughput on a small synthetic
//! problem (M=15, P=2, K=16, histories up to 10).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pairattn_bench::training_fixture;
use pairattn_core::{AttentionKind, Sample};
use std::hint::black_box;

fn train_step(c: &mut Criterion) {
    let batch = 256;
    let mut group = c.benchmark_group("train_step");
    group.throughput(Throughput::Elements(batch as u64));
    for kind in [AttentionKind::AutoAttention, AttentionKind::Din, AttentionKind::SumPooling] {
        let (mut model, data) = training_fixture(kind, batch);
        let samples: Vec<&Sample> = data.samples.iter().collect();
        group.bench_function(BenchmarkId::from_parameter(format!("{kind:?}")), |b| {
            b.iter(|| model.train_step(black_box(&samples)).unwrap())
        });
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let n = 2048;
    let mut group = c.benchmark_group("predict");
    group.throughput(Throughput::Elements(n as u64));
    for kind in [AttentionKind::AutoAttention, AttentionKind::Din] {
        let (mut model, data) = training_fixture(kind, n);
        group.bench_function(BenchmarkId::from_parameter(format!("{kind:?}")), |b| {
            b.iter(|| model.predict(black_box(&data)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, train_step, predict);
criterion_main!(benches);
