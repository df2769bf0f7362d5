use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ssbo_core::{lhs_sample, loocv_error, tune_shape, KernelKind, RbfModel, UnitPoint};

fn dataset(n: usize, m: usize) -> (Vec<UnitPoint>, Vec<f64>) {
    let xs = lhs_sample(n, m, 7).unwrap();
    let ys = xs.iter().map(|x| x.coords().iter().map(|v| (6.0 * v).sin()).sum()).collect();
    (xs, ys)
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    for n in [20, 60, 150] {
        let (xs, ys) = dataset(n, 4);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| RbfModel::fit(black_box(&xs), black_box(&ys), KernelKind::Gaussian, 1.0).unwrap())
        });
    }
    group.finish();
}

fn bench_loocv(c: &mut Criterion) {
    let mut group = c.benchmark_group("loocv");
    for n in [20, 60, 150] {
        let (xs, ys) = dataset(n, 4);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| loocv_error(black_box(&xs), black_box(&ys), KernelKind::Gaussian, 1.0).unwrap())
        });
    }
    group.finish();
}

fn bench_tune(c: &mut Criterion) {
    let mut group = c.benchmark_group("tune_shape");
    group.sample_size(10);
    for n in [20, 60] {
        let (xs, ys) = dataset(n, 4);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| tune_shape(black_box(&xs), black_box(&ys), KernelKind::Gaussian).unwrap())
        });
    }
    group.finish();
}

fn bench_predict(c: &mut Criterion) {
    let (xs, ys) = dataset(100, 4);
    let model = RbfModel::fit(&xs, &ys, KernelKind::Gaussian, 1.0).unwrap();
    let at = [0.3, 0.4, 0.5, 0.6];
    c.bench_function("predict/100", |b| b.iter(|| model.predict_coords(black_box(&at))));
}

criterion_group!(benches, bench_fit, bench_loocv, bench_tune, bench_predict);
criterion_main!(benches);
