use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deep_prior_core::{
    dropout_input_kernel, dropout_input_kernel_bruteforce, fixed_point_kernel, kernel_matrix,
    psd_factorize, FixedPointQuery, JitterPolicy, KernelSpec, PointSet,
};
use std::hint::black_box;

fn bench_gram(c: &mut Criterion) {
    let spec = KernelSpec::squared_exp(1.0, 1.0, 1).unwrap();
    let mut group = c.benchmark_group("gram_and_factor");
    for n in [100usize, 300, 1000] {
        let pts = PointSet::grid_1d(-5.0, 5.0, n).unwrap();
        group.bench_with_input(BenchmarkId::new("kernel_matrix", n), &pts, |b, pts| {
            b.iter(|| kernel_matrix(&spec, black_box(pts)).unwrap())
        });
        let k = kernel_matrix(&spec, &pts).unwrap();
        group.bench_with_input(BenchmarkId::new("psd_factorize", n), &k, |b, k| {
            b.iter(|| psd_factorize(black_box(k), JitterPolicy::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_fixed_point(c: &mut Criterion) {
    c.bench_function("fixed_point_kernel", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..100 {
                acc += fixed_point_kernel(&FixedPointQuery::new(black_box(i as f64 * 0.1))).unwrap();
            }
            acc
        })
    });
}

fn bench_dropout(c: &mut Criterion) {
    let k: Vec<f64> = (0..15).map(|i| 0.05 * i as f64 + 0.2).collect();
    c.bench_function("dropout_product_d15", |b| {
        b.iter(|| dropout_input_kernel(black_box(&k), 0.3).unwrap())
    });
    c.bench_function("dropout_bruteforce_d15", |b| {
        b.iter(|| dropout_input_kernel_bruteforce(black_box(&k), 0.3).unwrap())
    });
}

criterion_group!(benches, bench_gram, bench_fixed_point, bench_dropout);
criterion_main!(benches);
