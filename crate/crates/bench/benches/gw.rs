use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gw_bench::{curve_pair, curve_problem};
use gw_core::spectral::{jacobi_eigenvalues, tridiagonal_eigenvalues};
use gw_core::{build_gamma, frank_wolfe, ot_linear, FwOptions, Matrix};

fn bench_gamma(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_gamma");
    for n in [10, 25, 50] {
        let (x, y) = curve_pair(50, n);
        group.bench_with_input(BenchmarkId::from_parameter(50 * n), &n, |b, _| {
            b.iter(|| build_gamma(black_box(&x), black_box(&y), 1.0).unwrap())
        });
    }
    group.finish();
}

fn bench_eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigenvalues");
    group.sample_size(10);
    for n in [4, 8, 12] {
        let gamma = curve_problem(8, n, 1.0).gamma().unwrap().clone();
        group.bench_with_input(BenchmarkId::new("jacobi", 8 * n), &gamma, |b, g| {
            b.iter(|| jacobi_eigenvalues(g).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("tridiagonal", 8 * n), &gamma, |b, g| {
            b.iter(|| tridiagonal_eigenvalues(g).unwrap())
        });
    }
    group.finish();
}

fn bench_lmo(c: &mut Criterion) {
    let mut group = c.benchmark_group("ot_linear");
    for n in [10, 30, 50] {
        let cost = Matrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 23) as f64 + 0.1 * (i as f64 - j as f64).abs());
        let w = vec![1.0 / n as f64; n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &cost, |b, cost| {
            b.iter(|| ot_linear(black_box(cost), &w, &w).unwrap())
        });
    }
    group.finish();
}

fn bench_frank_wolfe(c: &mut Criterion) {
    let mut group = c.benchmark_group("frank_wolfe");
    group.sample_size(10);
    for n in [10, 20] {
        let problem = curve_problem(n, n, 2.0);
        let init = problem.independence_coupling();
        group.bench_with_input(BenchmarkId::from_parameter(n), &problem, |b, pr| {
            b.iter(|| frank_wolfe(pr, &init, FwOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gamma, bench_eigen, bench_lmo, bench_frank_wolfe);
criterion_main!(benches);
