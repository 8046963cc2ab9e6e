//! End-to-end epoch cost on the synthetic tree.

use criterion::{criterion_group, criterion_main, Criterion};
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::trainer::{train, Split, TrainConfig};
use std::hint::black_box;

fn bench_training(c: &mut Criterion) {
    let graph = gen_tree(3, 364, TreeVariant::H, 16, 0).unwrap();

    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for mode in ["off", "full"] {
        group.bench_function(format!("hgcn_nc_20_epochs_hie_{mode}"), |b| {
            b.iter(|| {
                let mut config = TrainConfig {
                    max_epochs: 20,
                    patience: 20,
                    dim: 8,
                    ..TrainConfig::default()
                };
                config.set("hie.mode", mode).unwrap();
                let split = Split::for_config(&config, &graph).unwrap();
                black_box(train(&config, &graph, &split).unwrap())
            })
        });
    }
    group.finish();

    c.bench_function("betweenness_364", |b| {
        b.iter(|| {
            black_box(
                hyprel::graph::centrality(&graph, hyprel::graph::CentralityKind::Betweenness)
                    .unwrap(),
            )
        })
    });
}

criterion_group!(benches, bench_training);
criterion_main!(benches);
