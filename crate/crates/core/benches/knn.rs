use std::hint::black_box;

use apt_lab::entropy::{intrinsic_rewards, EntropyConfig};
use apt_lab::geometry::{Backend, PointSet, SpatialIndex};
use apt_lab::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, dim: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointSet::new(dim, (0..n * dim).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn executions() -> Vec<(&'static str, Execution)> {
    let mut out = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        out.push(("parallel", Execution::Parallel));
    }
    out
}

fn knn_self(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_self");
    group.sample_size(10);
    for &(n, dim) in &[(1_000, 2), (1_000, 5), (10_000, 2), (10_000, 5), (10_000, 15)] {
        let points = cloud(n, dim, 7);
        for backend in [Backend::BruteForce, Backend::KdTree] {
            if backend == Backend::BruteForce && n > 1_000 && dim < 15 {
                continue;
            }
            let index = SpatialIndex::build(points.clone(), backend).unwrap();
            for (label, exec) in executions() {
                let id = BenchmarkId::new(format!("{backend:?}/{label}"), format!("n{n}_d{dim}"));
                group.bench_with_input(id, &points, |b, p| {
                    b.iter(|| black_box(index.knn_with(p, 5, true, exec).unwrap()))
                });
            }
        }
    }
    group.finish();
}

fn tree_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("kdtree_build");
    for &n in &[1_000, 10_000] {
        let points = cloud(n, 5, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, p| {
            b.iter(|| black_box(SpatialIndex::build(p.clone(), Backend::KdTree).unwrap()))
        });
    }
    group.finish();
}

fn batch_rewards(c: &mut Criterion) {
    let mut group = c.benchmark_group("intrinsic_rewards_batch");
    let latents = cloud(1_024, 5, 11);
    for (label, exec) in executions() {
        let cfg = EntropyConfig {
            exec,
            ..EntropyConfig::default()
        };
        group.bench_function(label, |b| b.iter(|| black_box(intrinsic_rewards(&latents, &cfg).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, knn_self, tree_build, batch_rewards);
criterion_main!(benches);
