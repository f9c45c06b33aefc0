use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fkppg::models::{build_dmm, build_rw1};
use fkppg::{run_scalar_pf, run_vpf, Execution, PfConfig};

fn engines(c: &mut Criterion) {
    let cases = [("rw1", build_rw1(true).ppg(), 4), ("dmm", build_dmm().ppg(), 50)];
    for (name, g, t) in &cases {
        let mut group = c.benchmark_group(format!("pf/{name}"));
        group.sample_size(10);
        for n in [10_000usize, 100_000] {
            let cfg = PfConfig::new(*t, n, 1);
            group.throughput(Throughput::Elements((n * t) as u64));
            group.bench_with_input(BenchmarkId::new("scalar", n), &cfg, |b, cfg| {
                b.iter(|| run_scalar_pf(g, cfg).unwrap())
            });
            group.bench_with_input(BenchmarkId::new("vpf-sequential", n), &cfg, |b, cfg| {
                b.iter(|| run_vpf(g, cfg, Execution::Sequential).unwrap())
            });
            group.bench_with_input(BenchmarkId::new("vpf-parallel", n), &cfg, |b, cfg| {
                b.iter(|| run_vpf(g, cfg, Execution::Parallel).unwrap())
            });
        }
        group.finish();
    }
}

criterion_group!(benches, engines);
criterion_main!(benches);
