//! One-thread pool against the default pool on the heavy kernels.
//!
//! Building without the `parallel` feature gives the plain sequential loops;
//! the one-thread pool here measures the same work plus rayon overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use schrolab::agmon::{solve_distance, DistanceProvider, SolveOptions, SolverMethod};
use schrolab::critical_radius::{rho_field, CriticalRadiusField};
use schrolab::grid::Grid;
use schrolab::potentials::{IntegrationRule, Potential};
use schrolab::suites::nested_levels;
use schrolab::weights::{s_class_constant, Weight};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut out = vec![("single".to_string(), ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    out.push((format!("default-{n}"), ThreadPoolBuilder::new().num_threads(n).build().unwrap()));
    out
}

fn bench(c: &mut Criterion) {
    let g3 = Grid::cube(3, -2.0, 2.0, 0.25).unwrap();
    let v = Potential::harmonic(3);
    let mut group = c.benchmark_group("rho_field");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| pool.install(|| rho_field(&v, &g3, 1e-4, Some((1e-3, 10.0)), &IntegrationRule::Exact).unwrap()))
        });
    }
    group.finish();

    let g1 = Grid::cube_points(1, -170.0, 170.0, 2000).unwrap();
    let prov = DistanceProvider::new(CriticalRadiusField::from_fn(&g1, |x| 1.0 / (1.0 + x[0].abs())).unwrap(), SolverMethod::Exact1d);
    let fam = nested_levels(64, 6, 2.5, 11, 1, 0.05).unwrap();
    let w = Weight::power(0.5);
    let mut group = c.benchmark_group("s_class_constant");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| pool.install(|| s_class_constant(&w, 2.0, 1.0, &prov, &fam).unwrap()))
        });
    }
    group.finish();

    let gf = Grid::cube(3, -1.0, 1.0, 1.0 / 24.0).unwrap();
    let rho = CriticalRadiusField::from_fn(&gf, |x| 1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())).unwrap();
    let mut group = c.benchmark_group("fast_marching");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| pool.install(|| solve_distance(&rho, &[0.0; 3], SolverMethod::FastMarching, SolveOptions::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
