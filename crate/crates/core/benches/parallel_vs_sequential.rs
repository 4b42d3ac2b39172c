use std::f64::consts::FRAC_PI_3;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pairsim_core::correlate::{scan, theta_independence_deviation, uniform_grid};
use pairsim_core::montecarlo::generate_events_with;
use pairsim_core::{DetectorSetting, Exec, FamilyKind, QuadratureRule, RunConfig, Side};

const STRATEGIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn events(c: &mut Criterion) {
    let run = RunConfig::fixed(
        FamilyKind::SpinTheta,
        7,
        100_000,
        DetectorSetting::stern_gerlach(Side::A, 0.0),
        DetectorSetting::stern_gerlach(Side::B, FRAC_PI_3),
    );
    let mut group = c.benchmark_group("generate_events_1e5");
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_events_with(&run, exec).unwrap())
        });
    }
    group.finish();
}

fn theta_sweep(c: &mut Criterion) {
    let (omegas, thetas) = (uniform_grid(64), uniform_grid(256));
    let mut group = c.benchmark_group("theta_independence_64x256");
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| theta_independence_deviation(&omegas, &thetas, exec))
        });
    }
    group.finish();
}

fn linear_scan(c: &mut Criterion) {
    let omegas = uniform_grid(64);
    let rule = QuadratureRule::default();
    let mut group = c.benchmark_group("linear_scan_64");
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| scan(FamilyKind::LinearTheta, &omegas, &rule, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, events, theta_sweep, linear_scan);
criterion_main!(benches);
