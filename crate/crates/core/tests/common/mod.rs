#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenario_opt::{AffineRow, BoxBounds, Generator, MultiSample, Sampler, ScenarioProgram, StageSpec};

pub fn example(name: &str) -> ScenarioProgram {
    let path = format!("{}/../../docs/examples/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    serde_json::from_str(&text).unwrap()
}

/// min x subject to x ≥ δ, δ ~ U[0, 1].
pub fn lower_bound_family(eps: f64) -> ScenarioProgram {
    let mut p = example("order_statistics");
    p.stages[0].eps = eps;
    p
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random stage whose rows are `(a + Σ δ_j a_j)·x ≤ b + Σ δ_j b_j`
/// with `rank` random directions, so it constrains a subspace of known
/// dimension (at most `rank + 1`).
pub fn random_stage(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> StageSpec {
    let vec = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let a = vec(rng);
    let a_delta: Vec<Vec<f64>> = (0..rank).map(|_| vec(rng)).collect();
    let mut b_delta: Vec<f64> = (0..rank).map(|_| rng.random_range(-0.5..0.5)).collect();
    b_delta.push(1.0);
    StageSpec {
        eps: 0.1,
        zeta_bar: None,
        monotone: false,
        discard: 0,
        generator: Generator::Linear {
            rows: vec![AffineRow { a, a_delta, b: 1.0, b_delta }],
        },
        sampler: Some(Sampler::Uniform { low: vec![-1.0; rank + 1], high: vec![1.0; rank + 1] }),
    }
}

/// Random feasible program over the box [-5, 5]^d: every row is
/// satisfied at the origin.
pub fn random_program(rng: &mut ChaCha8Rng, d: usize, ranks: &[usize]) -> ScenarioProgram {
    let cost: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let stages = ranks
        .iter()
        .map(|&r| {
            let mut s = random_stage(rng, d, r);
            if let Generator::Linear { rows } = &mut s.generator {
                rows[0].b = 1.0 + 0.5 * r as f64 + 1.0;
            }
            s
        })
        .collect();
    ScenarioProgram {
        dimension: d,
        cost,
        bounds: BoxBounds { lower: vec![-5.0; d], upper: vec![5.0; d] },
        deterministic_rows: vec![],
        stages,
    }
}

/// Draws `sizes[i]` outcomes per stage from a test-local generator.
pub fn random_sample(rng: &mut ChaCha8Rng, program: &ScenarioProgram, sizes: &[usize]) -> MultiSample {
    let outcomes = program
        .stages
        .iter()
        .zip(sizes)
        .map(|(s, &k)| (0..k).map(|_| s.sampler.as_ref().unwrap().sample(rng)).collect())
        .collect();
    let mut ms = MultiSample::from_outcomes(outcomes);
    for ties in ms.tie_breaks.iter_mut() {
        for t in ties.iter_mut() {
            *t = rng.random::<f64>();
        }
    }
    ms.domain_tie = rng.random::<f64>();
    ms
}
