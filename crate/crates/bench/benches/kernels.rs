//! Hot-path timings: neighbour queries, window scoring, surface refits,
//! metric sweeps, and one small end-to-end run.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::{Point3, Vector3};
use sepmembrane::membrane::init_octagon;
use sepmembrane::metrics::chamfer;
use sepmembrane::synth::gen_sphere;
use sepmembrane::{
    reconstruct, Cuboid, DensityMode, MembraneConfig, SeparabilityEvaluator, SeparabilityWeights,
};
use std::hint::black_box;

fn knn_queries(c: &mut Criterion) {
    let cloud = gen_sphere(50_000, 1.0, 1).unwrap();
    let queries: Vec<Point3<f64>> = cloud.positions().iter().step_by(97).copied().collect();
    c.bench_function("knn_k8_50k", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(cloud.index().knn(q, 8, None));
            }
        })
    });
}

fn max_split_window(c: &mut Criterion) {
    let cloud = gen_sphere(20_000, 1.0, 2).unwrap();
    let eval = SeparabilityEvaluator::new(
        &cloud,
        SeparabilityWeights::point_only(),
        DensityMode::Global,
        8,
    )
    .unwrap();
    let search = Cuboid::new(
        Point3::new(1.0, 0.0, 0.0),
        [Vector3::x(), Vector3::y(), Vector3::z()],
        [0.5, 0.25, 0.25],
    )
    .unwrap();
    c.bench_function("max_split_65_20k", |b| {
        b.iter(|| black_box(eval.max_split(&search, 65).unwrap()))
    });
}

fn surface_refit(c: &mut Criterion) {
    let cloud = gen_sphere(2_000, 1.0, 3).unwrap();
    let surface = init_octagon(&cloud, 0.05, (12, 8)).unwrap();
    let grid = surface.sample_grid(25, 17).unwrap();
    let targets: Vec<Point3<f64>> = grid.points.clone();
    c.bench_function("refit_12x8_from_425", |b| {
        b.iter(|| black_box(surface.refit(&grid.params, &targets).unwrap()))
    });
}

fn chamfer_20k(c: &mut Criterion) {
    let a = gen_sphere(20_000, 1.0, 4).unwrap();
    let b = gen_sphere(20_000, 1.01, 5).unwrap();
    c.bench_function("chamfer_20k_20k", |bch| {
        bch.iter(|| black_box(chamfer(a.positions(), b.positions()).unwrap()))
    });
}

fn reconstruct_small(c: &mut Criterion) {
    let cloud = gen_sphere(600, 1.0, 6).unwrap();
    let config = MembraneConfig {
        max_iterations: 6,
        init_grid: (8, 5),
        max_grid: (8, 5),
        n_splits: 33,
        mesh_resolution: (16, 8),
        deterministic: true,
        ..MembraneConfig::default()
    };
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("reconstruct_600pts_6it", |b| {
        b.iter_batched(
            || cloud.clone(),
            |cl| black_box(reconstruct(&cl, &config).unwrap()),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(
    benches,
    knn_queries,
    max_split_window,
    surface_refit,
    chamfer_20k,
    reconstruct_small
);
criterion_main!(benches);
