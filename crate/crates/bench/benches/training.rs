use criterion::{criterion_group, criterion_main, Criterion};
use protospace_bench::world;
use protospace_core::alignment::{grad_check, init_adapter, train, Mode, Scope, TrainConfig};
use std::hint::black_box;

fn bench_epochs(c: &mut Criterion) {
    let w = world(40);
    let train_feats = [0, 1, 2, 3];
    let class = w.classification_items_for(&train_feats).unwrap();
    let pairs = w.rank_pairs(&train_feats, 340, 0).unwrap();
    let init = init_adapter(w.config.d, Scope::PrototypesOnly, 0);
    let cfg = TrainConfig {
        mode: Mode::ClassRankPerc,
        epochs: 5,
        ..TrainConfig::default()
    };
    c.bench_function("train_5_epochs_d64", |b| {
        b.iter(|| train(black_box(&init), &class, &pairs, &w.store, &cfg).unwrap())
    });
    c.bench_function("grad_check_d64", |b| {
        b.iter(|| grad_check(black_box(&init), &class, &pairs, &w.store, &cfg, 1e-6).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_epochs
}
criterion_main!(benches);
