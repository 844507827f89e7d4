use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deep_prior_core::jacobian::normalized_singular_values;
use deep_prior_core::{JacobianSpec, RngStream};

fn bench_spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("normalized_singular_values");
    for (depth, width, connected) in [(50, 5, false), (50, 5, true), (100, 32, false)] {
        let spec = JacobianSpec::isotropic(depth, width, 1.0, 1.0, connected);
        let id = format!("L{depth}_D{width}_{}", if connected { "connected" } else { "standard" });
        group.bench_with_input(BenchmarkId::from_parameter(id), &spec, |b, spec| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                normalized_singular_values(spec, &mut RngStream::new(seed, 0).rng()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_spectrum);
criterion_main!(benches);
