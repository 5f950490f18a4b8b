use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use magspec_core::anchor::{init_anchors, solve_coefficients};
use magspec_core::dataset::{generate_synthetic, SyntheticSpec};
use magspec_core::encoder::{Architecture, AutoencoderParams};
use magspec_core::numerics::{hungarian, kmeans_best_of, project_to_simplex};
use magspec_core::pipeline::{build_backbone, build_geometry, GeometryConfig};
use magspec_core::training::{train, Epochs, TrainConfig};
use magspec_core::MultiViewDataset;
use nalgebra::DMatrix;

fn blobs(n: usize) -> MultiViewDataset {
    generate_synthetic(&SyntheticSpec::blobs(n, 3, vec![10, 12, 8], 0)).unwrap()
}

fn latents(ds: &MultiViewDataset) -> Vec<DMatrix<f64>> {
    AutoencoderParams::init(&ds.view_dims(), &Architecture::default(), 1).encode_all(ds).unwrap()
}

fn kernels(c: &mut Criterion) {
    let v: Vec<f64> = (0..64).map(|i| ((i * 37) % 17) as f64 / 5.0 - 1.5).collect();
    c.bench_function("simplex projection m=64", |b| b.iter(|| project_to_simplex(black_box(&v))));

    let costs = DMatrix::from_fn(20, 20, |i, j| ((i * 7 + j * 13) % 23) as f64);
    c.bench_function("hungarian 20x20", |b| b.iter(|| hungarian(black_box(&costs))));

    let ds = blobs(600);
    let z = latents(&ds);
    c.bench_function("kmeans n=600 k=3 x10", |b| b.iter(|| kmeans_best_of(black_box(&z[0]), 3, 0, 10).unwrap()));

    let anchors = init_anchors(&z, &[25, 25, 25], 0).unwrap();
    c.bench_function("anchor qp n=600 m=25", |b| {
        b.iter(|| solve_coefficients(black_box(&z[0]), &anchors.anchors[0], 0.1).unwrap())
    });
}

fn geometry(c: &mut Criterion) {
    let mut group = c.benchmark_group("geometry");
    group.sample_size(10);
    let cfg = GeometryConfig::default();
    for n in [300, 600, 1200] {
        let z = latents(&blobs(n));
        group.bench_with_input(BenchmarkId::new("backbone", n), &z, |b, z| {
            b.iter(|| build_backbone(z, 3, &cfg, 0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("full", n), &z, |b, z| {
            b.iter(|| build_geometry(z, 3, &cfg, 0).unwrap())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    let ds = blobs(300);
    let cfg = TrainConfig { epochs: Epochs { pretrain: 10, stage_one: 10, stage_two: 5 }, ..TrainConfig::default() };
    group.bench_function("short schedule n=300", |b| b.iter(|| train(black_box(&ds), 3, &cfg, 0).unwrap()));
    group.finish();
}

criterion_group!(benches, kernels, geometry, training);
criterion_main!(benches);
