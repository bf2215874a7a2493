use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deautoconv::autoconv::{autoconvolve_naive, Autoconvolution, DataCase};
use deautoconv::experiments::{self, StudyConfig};
use deautoconv::par::Exec;
use deautoconv::phantoms::{sample_phantom, PhantomId};
use std::hint::black_box;

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("autoconvolution");
    for (id, m) in [(PhantomId::Product2D, 50), (PhantomId::Product2D, 100), (PhantomId::Product3D, 20)] {
        let x = sample_phantom(id, m).unwrap();
        let op = Autoconvolution::new(x.spec(), DataCase::Full).unwrap();
        let label = format!("n{}_m{m}", id.dim());
        g.bench_with_input(BenchmarkId::new("fft", &label), &x, |b, x| b.iter(|| op.apply(black_box(x)).unwrap()));
        if m <= 50 {
            g.bench_with_input(BenchmarkId::new("naive", &label), &x, |b, x| {
                b.iter(|| autoconvolve_naive(black_box(x), DataCase::Full).unwrap())
            });
        }
    }
    g.finish();
}

fn study(c: &mut Criterion) {
    let mut g = c.benchmark_group("rate_study");
    g.sample_size(10);
    let mut cfg = StudyConfig::new(2, DataCase::Full, 16);
    cfg.runs = 4;
    cfg.levels = vec![0.1, 0.01];
    cfg.solver.alpha_points = 12;
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        g.bench_function(name, |b| b.iter(|| experiments::run_rate_study(black_box(&cfg), exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, forward, study);
criterion_main!(benches);
