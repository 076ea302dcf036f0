use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tegma_bench::{model_sample, pd_matrix};
use tegma_core::estimators::{estimate, EstimatorSpec, Method, Prepared};
use tegma_core::glasso::{graphical_lasso, SolverOptions};
use tegma_core::robust::{spatial_median, MedianOptions};
use tegma_core::DistSpec;

fn glasso(c: &mut Criterion) {
    let mut g = c.benchmark_group("glasso");
    g.sample_size(20);
    for p in [10usize, 50, 100] {
        let s = pd_matrix(p, p as u64);
        let lambda = 0.1 * s.max_abs_off_diagonal();
        g.bench_with_input(BenchmarkId::from_parameter(p), &s, |b, s| {
            b.iter(|| graphical_lasso(black_box(s), &SolverOptions::with_lambda(lambda)).unwrap())
        });
    }
    g.finish();
}

fn mode_scatter(c: &mut Criterion) {
    let (_, data) = model_sample(3, 100, DistSpec::T3, 1);
    let prepared = Prepared::new(&data, &EstimatorSpec::new(Method::Sss, vec![0.0; 3])).unwrap();
    let mut g = c.benchmark_group("mode_scatter");
    g.sample_size(20);
    for k in 0..3 {
        g.bench_with_input(BenchmarkId::from_parameter(k + 1), &k, |b, &k| {
            b.iter(|| prepared.scatter(black_box(k)).unwrap())
        });
    }
    g.finish();
}

fn center(c: &mut Criterion) {
    let (_, data) = model_sample(3, 100, DistSpec::T3, 2);
    c.bench_function("spatial_median/model3_n100", |b| {
        b.iter(|| spatial_median(black_box(&data), MedianOptions::default()).unwrap())
    });
}

fn estimators(c: &mut Criterion) {
    let (_, data) = model_sample(3, 100, DistSpec::T3, 3);
    let mut g = c.benchmark_group("estimate_model3_n100");
    g.sample_size(10);
    for method in Method::ALL {
        let spec = EstimatorSpec::new(method, vec![1e-4, 1e-4, 5e-5]);
        g.bench_function(method.to_string(), |b| {
            b.iter(|| estimate(black_box(&data), &spec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, glasso, mode_scatter, center, estimators);
criterion_main!(benches);
