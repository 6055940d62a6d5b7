use criterion::{criterion_group, criterion_main, Criterion};
use fodshift::parallel;
use ndarray::Array2;

fn bench_matmul(c: &mut Criterion) {
    let a = Array2::from_shape_fn((256, 162), |(i, j)| ((i + 3 * j) % 17) as f64 * 0.1 - 0.8);
    let b = Array2::from_shape_fn((162, 512), |(i, j)| ((2 * i + j) % 13) as f64 * 0.1 - 0.6);
    let mut g = c.benchmark_group("matmul_256x162x512");
    g.bench_function("parallel", |bch| {
        bch.iter(|| parallel::matmul(&a.view(), &b.view()))
    });
    g.bench_function("sequential", |bch| {
        bch.iter(|| parallel::matmul_seq(&a.view(), &b.view()))
    });
    g.finish();
}

criterion_group!(benches, bench_matmul);
criterion_main!(benches);
