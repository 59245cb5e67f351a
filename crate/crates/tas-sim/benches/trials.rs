//! Benchmarks the Monte-Carlo trial runner: rayon fan-out vs the
//! single-threaded fallback, on one cheap and one event-heavy
//! configuration.
//!
//! Both paths aggregate in trial order and produce identical outcomes;
//! the interesting number is the wall-clock ratio, which tracks the
//! available cores (on a single-core host the two should be within
//! noise of each other).

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tas_sim::adversary::AdversaryId;
use tas_sim::algorithms::AlgorithmId;
use tas_sim::harness::{run_trials_parallel, run_trials_sequential, RunSpec, DEFAULT_STEP_LIMIT};

fn spec(algorithm: AlgorithmId, k: u32, trials: u64) -> RunSpec {
    RunSpec {
        algorithm,
        adversary: AdversaryId::ObliviousRandom,
        k,
        n: k.next_power_of_two(),
        trials,
        seed: 0xbe9c,
        step_limit: DEFAULT_STEP_LIMIT,
    }
}

fn bench_runners(c: &mut Criterion) {
    let cases = [
        ("ratrace_k16", spec(AlgorithmId::TasRatRace, 16, 200)),
        ("getas_k256", spec(AlgorithmId::TasGeLocObl, 256, 20)),
    ];

    let mut group = c.benchmark_group("trial_runner");
    group
        .sample_size(10)
        .warm_up_time(Duration::from_millis(500))
        .measurement_time(Duration::from_secs(3));
    for (name, s) in cases {
        group.bench_with_input(BenchmarkId::new("parallel", name), &s, |b, s| {
            b.iter(|| run_trials_parallel(s).expect("valid spec"));
        });
        group.bench_with_input(BenchmarkId::new("sequential", name), &s, |b, s| {
            b.iter(|| run_trials_sequential(s).expect("valid spec"));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_runners);
criterion_main!(benches);
