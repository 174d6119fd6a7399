use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use oblivnet::obliv::obl_sort;
use oblivnet::TraceLog;
use oblivnet_bench::{batch, engine, params};

fn batch_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("batch_step");
    g.sample_size(10);
    for workers in [1, 2, 4] {
        let data = batch(&params(workers), 3);
        g.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter_batched(
                || engine(w),
                |mut e| e.batch_step(&mut TraceLog::disabled(), &data).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

fn refresh(c: &mut Criterion) {
    let mut e = engine(1);
    c.bench_function("refresh", |b| b.iter(|| e.refresh(&mut TraceLog::disabled()).unwrap()));
}

fn sort(c: &mut Criterion) {
    let mut g = c.benchmark_group("obl_sort_u64");
    for n in [256usize, 1000, 4096] {
        let input: Vec<u64> = (0..n as u64).map(|i| i.wrapping_mul(0x9E37_79B9_7F4A_7C15)).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &input, |b, input| {
            b.iter_batched(
                || input.clone(),
                |mut v| obl_sort(&mut TraceLog::disabled(), "Bench", &mut v, |x| *x),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, batch_step, refresh, sort);
criterion_main!(benches);
