use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scenario_opt::bounds::implicit_sample_size;
use scenario_opt::cuboid_bench::{cuboid_solve_analytic, CuboidInstance, CuboidMode};
use scenario_opt::probkernel::binomial_cdf;
use scenario_opt::{
    draw_replication, remove_greedy, solve, AffineRow, BoxBounds, Generator, MultiSample, Sampler,
    ScenarioProgram, StageSpec,
};

/// min x subject to x ≥ δ.
fn order_statistics() -> ScenarioProgram {
    ScenarioProgram {
        dimension: 1,
        cost: vec![1.0],
        bounds: BoxBounds { lower: vec![-10.0], upper: vec![10.0] },
        deterministic_rows: vec![],
        stages: vec![StageSpec {
            eps: 0.1,
            zeta_bar: Some(1),
            monotone: true,
            discard: 0,
            generator: Generator::Linear {
                rows: vec![AffineRow { a: vec![-1.0], a_delta: vec![], b: 0.0, b_delta: vec![-1.0] }],
            },
            sampler: Some(Sampler::Uniform { low: vec![0.0], high: vec![1.0] }),
        }],
    }
}

fn probability(c: &mut Criterion) {
    let mut g = c.benchmark_group("binomial_cdf");
    for &k in &[100u64, 2_000, 100_000] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| binomial_cdf(black_box(4), k, 0.01))
        });
    }
    g.finish();
    c.bench_function("implicit_sample_size/zeta=1001", |b| {
        b.iter(|| implicit_sample_size(black_box(1001), 0.01, 1e-6))
    });
}

fn scenario(c: &mut Criterion) {
    let inst = CuboidInstance { n: 2, eps: vec![0.1; 2], theta_total: 1e-6, mode: CuboidMode::MultiStage };
    let program = inst.program();
    let mut g = c.benchmark_group("cuboid");
    for &k in &[50usize, 400] {
        let sample = draw_replication(&program, &[k, k], 1, 0).unwrap();
        g.bench_with_input(BenchmarkId::new("lp", k), &sample, |b, s| b.iter(|| solve(&program, black_box(s))));
        g.bench_with_input(BenchmarkId::new("analytic", k), &sample, |b, s| {
            b.iter(|| cuboid_solve_analytic(&inst, black_box(s)))
        });
    }
    g.finish();

    let program = order_statistics();
    let values: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
    let sample = MultiSample::scalar(&values);
    c.bench_function("remove_greedy/K=100,R=5", |b| {
        b.iter(|| remove_greedy(&program, black_box(&sample), &[5]))
    });
}

criterion_group!(benches, probability, scenario);
criterion_main!(benches);
