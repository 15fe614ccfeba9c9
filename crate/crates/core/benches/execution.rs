//! Multi-seed CRPO runs executed sequentially and on the rayon pool.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use crpo_core::envs::td_garnet;
use crpo_core::experiment::{run_seeds, RunSpec};
use crpo_core::{CrpoConfig, EvalMode, Execution, TdConfig, TieBreak};

fn spec(eval_mode: EvalMode) -> RunSpec {
    RunSpec::Crpo(CrpoConfig {
        t_max: 20,
        alpha: 0.1,
        eta: 0.1,
        td: TdConfig {
            k_in: 2000,
            ..Default::default()
        },
        tie_break: TieBreak::FirstIndex,
        seed: 0,
        eval_mode,
        eval_epsilon: 0.0,
    })
}

fn bench_seeds(c: &mut Criterion) {
    let model = td_garnet();
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("crpo_8_seeds");
    group.sample_size(10);
    for (name, mode) in [("td", EvalMode::Td), ("exact", EvalMode::Exact)] {
        let spec = spec(mode);
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(format!("{exec:?}"), name),
                &spec,
                |b, spec| b.iter(|| run_seeds(black_box(&model), spec, &seeds, exec).unwrap()),
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench_seeds);
criterion_main!(benches);
