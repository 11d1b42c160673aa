//! Data-parallel paths on a one-thread pool against the default pool. Build
//! with `--no-default-features` to time the plain sequential loops instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use netanomaly::anomography::{anomography_pipeline, AlarmRule, Solver, Transform};
use netanomaly::extraction::{extract_pipeline, ExtractConfig};
use netanomaly::sketch::{defeat_pipeline, DefeatConfig};
use netanomaly::synth::{flows, od_traffic, random_routing, source_ip, dest_ip, split_by_router, Anomaly, TrafficConfig};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn bench_anomography(c: &mut Criterion) {
    let a = random_routing(40, 200, 5, 1).unwrap();
    let y = od_traffic(256, 200, 128.0, 0.02, 2).unwrap() * a.transpose();
    let mut g = c.benchmark_group("anomography");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("omp", name), |b| {
            b.iter(|| {
                pool.install(|| anomography_pipeline(&y, &a, &Transform::Fourier { c: 4 }, &Solver::Omp { k: 5, tol: 1e-6 }, &AlarmRule::default()))
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn bench_defeat(c: &mut Criterion) {
    let cfg = TrafficConfig { n_bins: 144, flows_per_bin: 600.0, seed: 3, ..Default::default() };
    let recs = flows(&cfg, &[Anomaly::PortScan { bin: 100, sip: source_ip(9), dip: dest_ip(4), ports: 80 }]).unwrap();
    let routers = split_by_router(&recs, 3);
    let dc = DefeatConfig { m: 8, l: 5, ..Default::default() };
    let mut g = c.benchmark_group("defeat");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("m8", name), |b| b.iter(|| pool.install(|| defeat_pipeline(&routers, &dc)).unwrap()));
    }
    g.finish();
}

fn bench_extraction(c: &mut Criterion) {
    let cfg = TrafficConfig { n_bins: 96, seed: 4, ..Default::default() };
    let recs = flows(&cfg, &[Anomaly::PortScan { bin: 60, sip: source_ip(9), dip: dest_ip(4), ports: 120 }]).unwrap();
    let ec = ExtractConfig::default();
    let mut g = c.benchmark_group("extraction");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("default", name), |b| b.iter(|| pool.install(|| extract_pipeline(&recs, &ec)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, bench_anomography, bench_defeat, bench_extraction);
criterion_main!(benches);
