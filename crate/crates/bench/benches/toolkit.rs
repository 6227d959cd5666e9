use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypdyn::geometry::Point2;
use hypdyn::manifold::local_stable_manifold;
use hypdyn::maps::SystemModel;
use hypdyn::partition::{transition_matrix, verify_markov, RefineMode};
use hypdyn::reproduce::horseshoe_table;
use hypdyn::shadowing::{shadow_batch, ShadowConfig};
use hypdyn::symbolic::{count_periodic, spectral_radius, TransitionMatrix, DEFAULT_BRUTE_BUDGET};
use hypdyn_bench::{cat_orbits, horseshoe_partition};
use std::hint::black_box;

fn manifold(c: &mut Criterion) {
    let m = SystemModel::cat_map();
    let x = Point2::torus(0.0, 0.0);
    c.bench_function("cat stable manifold", |b| {
        b.iter(|| local_stable_manifold(&m, black_box(&x), 0.025, 1e-11).unwrap())
    });
}

fn shadowing(c: &mut Criterion) {
    let m = SystemModel::cat_map();
    let orbits = cat_orbits(100, 50, 1e-4);
    let mut g = c.benchmark_group("shadow 100 orbits");
    g.sample_size(10);
    for jobs in [1, 4] {
        g.bench_with_input(BenchmarkId::from_parameter(jobs), &jobs, |b, &j| {
            b.iter(|| shadow_batch(&m, &orbits, &ShadowConfig::default(), Some(j)))
        });
    }
    g.finish();
}

fn partitions(c: &mut Criterion) {
    let m = SystemModel::horseshoe();
    let mut g = c.benchmark_group("markov");
    g.sample_size(10);
    for k in [4, 8] {
        let p = horseshoe_partition(k, RefineMode::Pushforward);
        g.bench_with_input(BenchmarkId::new("verify", k), &p, |b, p| b.iter(|| verify_markov(&m, p, 9)));
        g.bench_with_input(BenchmarkId::new("matrix", k), &p, |b, p| b.iter(|| transition_matrix(&m, p)));
    }
    g.finish();
    c.bench_function("reproduce horseshoe", |b| b.iter(horseshoe_table));
}

fn symbolic(c: &mut Criterion) {
    let a = TransitionMatrix::de_bruijn(2, 6);
    c.bench_function("spectral radius 64", |b| b.iter(|| spectral_radius(black_box(&a), 1e-13).unwrap()));
    let f = TransitionMatrix::full_shift(2);
    c.bench_function("count periodic n=12", |b| {
        b.iter(|| count_periodic(black_box(&f), 12, DEFAULT_BRUTE_BUDGET).unwrap())
    });
}

criterion_group!(benches, manifold, shadowing, partitions, symbolic);
criterion_main!(benches);
