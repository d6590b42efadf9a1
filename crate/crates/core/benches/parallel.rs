//! Sequential vs rayon execution for dataset generation and batch scoring.
//! Build with `--no-default-features` to measure the fallback alone.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nminus1::analysis::evaluate_mse;
use nminus1::grid::GridCase;
use nminus1::matpower::read_matpower_case;
use nminus1::par::{is_parallel_available, Execution};
use nminus1::scenario::{generate_dataset, SamplingConfig};
use nminus1::surrogate::{train, TrainConfig, Variant};

fn case(name: &str) -> GridCase {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(format!("{name}.m"));
    read_matpower_case(path).unwrap()
}

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    if is_parallel_available() {
        m.push(("parallel", Execution::Parallel));
        m.push(("threads-2", Execution::Threads(2)));
    }
    m
}

fn generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate");
    group.sample_size(10);
    for (name, n) in [("ieee14", 500), ("ieee118", 20)] {
        let grid = case(name);
        let cfg = SamplingConfig {
            n_instances: n,
            cut_probability: 0.5,
            seed: 1,
            ..Default::default()
        };
        for (mode, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, mode), &exec, |b, &exec| {
                b.iter(|| black_box(generate_dataset(&grid, &cfg, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let grid = case("ieee14");
    let data = |n, p, seed| {
        let cfg = SamplingConfig {
            n_instances: n,
            cut_probability: p,
            seed,
            ..Default::default()
        };
        generate_dataset(&grid, &cfg, Execution::Parallel)
            .unwrap()
            .records
    };
    let train_set = data(200, 0.0, 2);
    let eval_set = data(2000, 1.0, 3);
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    let model = train(&train_set, Variant::Medium, &cfg).unwrap().model;

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (mode, exec) in modes() {
        group.bench_with_input(
            BenchmarkId::new("ieee14-medium", mode),
            &exec,
            |b, &exec| b.iter(|| black_box(evaluate_mse(&model, &eval_set, exec).unwrap())),
        );
    }
    group.finish();
}

criterion_group!(benches, generation, scoring);
criterion_main!(benches);
