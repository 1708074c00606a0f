//! Sequential versus data-parallel execution of the hot loops: batched
//! fiber scoring, one training epoch and a filtered evaluation pass.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kbc_core::data::{FilterIndex, Split, Triple, TripleStore};
use kbc_core::eval::{evaluate_with, EvalOptions};
use kbc_core::model::{batch_score_rhs_with, init_model, Formulation, ModelConfig, Variant};
use kbc_core::par::Exec;
use kbc_core::train::{fit, RegularizerConfig, RegularizerVariant, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn store(n: usize, p: usize, len: usize, seed: u64, split: Split) -> TripleStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: Vec<Triple> = (0..len)
        .map(|_| {
            Triple::new(
                rng.random_range(0..n as u32),
                rng.random_range(0..p as u32),
                rng.random_range(0..n as u32),
            )
        })
        .collect();
    t.sort();
    t.dedup();
    TripleStore::new(t, n, p, split).unwrap()
}

fn scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_score_rhs");
    for variant in [Variant::Cp, Variant::ComplEx] {
        let model = init_model(&ModelConfig::new(variant, 100), 5000, 20).unwrap();
        let pairs: Vec<(usize, usize)> = (0..100).map(|b| (b * 37 % 5000, b % 20)).collect();
        for (name, exec) in STRATEGIES {
            group.bench_with_input(BenchmarkId::new(name, variant.name()), &exec, |b, &exec| {
                b.iter(|| batch_score_rhs_with(black_box(&model), &pairs, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let train = store(2000, 10, 10_000, 1, Split::Train).augment_reciprocal().unwrap();
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        let mut config = TrainConfig::new(
            ModelConfig::new(Variant::ComplEx, 50),
            Formulation::Reciprocal,
            RegularizerConfig::new(RegularizerVariant::N3Sampled, 1e-2),
        );
        config.epochs = 1;
        config.batch_size = 500;
        config.exec = exec;
        group.bench_function(name, |b| b.iter(|| fit(&config, &train, None, None).unwrap()));
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let train = store(3000, 10, 20_000, 2, Split::Train);
    let test = store(3000, 10, 1000, 3, Split::Test);
    let filter = FilterIndex::build(&[&train, &test], true).unwrap();
    let model = init_model(&ModelConfig::new(Variant::Cp, 100), 3000, 20).unwrap();
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        let opts = EvalOptions { exec, ..EvalOptions::default() };
        group.bench_function(name, |b| {
            b.iter(|| evaluate_with(&model, &test, &filter, Formulation::Reciprocal, &opts, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scoring, training_epoch, evaluation);
criterion_main!(benches);
