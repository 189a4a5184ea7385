//! Sequential against rayon-parallel replicate fan-out.
//!
//! Without the `parallel` feature both arms run the same loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ergoq::beliefs::{estimate_lt_curve, LtConfig};
use ergoq::experiments::{machine_policy_values, two_state_pomdp};
use ergoq::par::ExecMode;

fn policy_values(c: &mut Criterion) {
    let mut group = c.benchmark_group("machine_policy_values");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| machine_policy_values(4000, 60, 50, 3, mode).unwrap())
        });
    }
    group.finish();
}

fn lt_curve(c: &mut Criterion) {
    let model = two_state_pomdp(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).build().unwrap();
    let mut group = c.benchmark_group("lt_curve");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        let cfg = LtConfig {
            window: 1,
            t_max: 12,
            reps: 2000,
            seed: 6,
            initial: vec![0.5, 0.5],
            mode,
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &cfg, |b, cfg| {
            b.iter(|| estimate_lt_curve(&model, &[0.5, 0.5], cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, policy_values, lt_curve);
criterion_main!(benches);
