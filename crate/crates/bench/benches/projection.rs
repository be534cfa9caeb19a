use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soda_core::learner::{step_soda1, step_soma2};
use soda_core::simplex::project_scaled_simplex;
use soda_core::{Grid, InitMode, Strategy};

fn simplex(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("project_scaled_simplex");
    for n in [16, 64, 256, 4096] {
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter_batched(|| y.clone(), |mut v| project_scaled_simplex(black_box(&mut v), 0.3), BatchSize::SmallInput)
        });
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = 64;
    let grid = Grid::uniform(0.0, 1.0, k).unwrap();
    let s = Strategy::init(InitMode::Random, grid.clone(), vec![grid], vec![1.0 / k as f64; k], 3).unwrap();
    let g = Array2::from_shape_fn((k, k), |_| rng.random::<f64>());
    c.bench_function("step_soda1_64x64", |b| b.iter(|| step_soda1(black_box(&s), black_box(&g), 10.0).unwrap()));
    c.bench_function("step_soma2_64x64", |b| b.iter(|| step_soma2(black_box(&s), black_box(&g), 10.0).unwrap()));
}

criterion_group!(benches, simplex, steps);
criterion_main!(benches);
