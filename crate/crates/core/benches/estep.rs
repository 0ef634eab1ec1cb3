//! Sequential versus rayon execution of the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use decpomdp_em::generate::{random_model, RandomShape};
use decpomdp_em::{
    bellman_solve, build_joint_chain_with, forward_backward, init_policy, mbem_estep, tmax_bound,
    Exec, InitScheme,
};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

/// (states, per-agent memory): joint dimension states * memory².
const SIZES: [(usize, usize); 3] = [(8, 2), (16, 3), (24, 4)];

fn setup(states: usize, memory: usize) -> (decpomdp_em::DecPomdpModel, decpomdp_em::JointPolicy) {
    let model = random_model(&RandomShape::uniform(states, 2, 3, 0.95), 42);
    let policy = init_policy(&model, &[memory, memory], 7, InitScheme::Random).unwrap();
    (model, policy)
}

fn chain_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_joint_chain");
    for (states, memory) in SIZES {
        let (model, policy) = setup(states, memory);
        let dim = states * memory * memory;
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, dim), &exec, |b, &exec| {
                b.iter(|| build_joint_chain_with(black_box(&model), black_box(&policy), exec).unwrap())
            });
        }
    }
    g.finish();
}

fn estep_engines(c: &mut Criterion) {
    let mut g = c.benchmark_group("estep");
    g.sample_size(20);
    for (states, memory) in SIZES {
        let (model, policy) = setup(states, memory);
        let dim = states * memory * memory;
        let t_max = tmax_bound(model.discount, 0.1).unwrap();
        for (name, exec) in MODES {
            let chain = build_joint_chain_with(&model, &policy, exec).unwrap();
            g.bench_with_input(BenchmarkId::new(format!("em/{name}"), dim), &chain, |b, chain| {
                b.iter(|| forward_backward(black_box(chain), t_max))
            });
            g.bench_with_input(BenchmarkId::new(format!("mbem-cold/{name}"), dim), &chain, |b, chain| {
                b.iter(|| {
                    mbem_estep(black_box(chain), 0.1, chain.initial(), chain.scaled_reward(), 4 * t_max)
                        .unwrap()
                })
            });
        }
        let chain = build_joint_chain_with(&model, &policy, Exec::Sequential).unwrap();
        g.bench_with_input(BenchmarkId::new("bem", dim), &chain, |b, chain| {
            b.iter(|| bellman_solve(black_box(chain)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, chain_build, estep_engines);
criterion_main!(benches);
