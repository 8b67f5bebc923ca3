use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use eve_core::model::{RunConfig, VariantKind};
use eve_core::par::Execution;
use eve_core::presets::synthetic_config;
use eve_core::sim::{ablation_sweep, elo_sweep, synthetic_run, EloRace};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn elo(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..64).collect();
    let mut g = c.benchmark_group("elo_sweep_64_seeds");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| elo_sweep(EloRace::default(), &seeds, exec))
        });
    }
    g.finish();
}

fn race_iterations(c: &mut Criterion) {
    let config = RunConfig {
        total_iterations: 3,
        working_count: 8,
        ..synthetic_config()
    };
    let mut g = c.benchmark_group("race_3_iterations_8_slots");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter_batched(
                || {
                    let dir = tempfile::tempdir().unwrap();
                    let (engine, state) =
                        synthetic_run(dir.path(), 1, VariantKind::Eve, None, config.clone(), exec).unwrap();
                    (dir, engine, state)
                },
                |(dir, engine, mut state)| {
                    engine.run(&mut state, None).unwrap();
                    dir
                },
                criterion::BatchSize::PerIteration,
            )
        });
    }
    g.finish();
}

fn ablation(c: &mut Criterion) {
    let seeds: Vec<u64> = (1..=4).collect();
    let mut g = c.benchmark_group("ablation_4_seeds_5_iterations");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let dir = tempfile::tempdir().unwrap();
                ablation_sweep(dir.path(), &seeds, 5, exec).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, elo, race_iterations, ablation);
criterion_main!(benches);
