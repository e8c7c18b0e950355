//! Ex-post estimation of stage violation probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::SampleSizePlan;
use crate::discard::{remove, RemovalAlgorithm};
use crate::error::{domain, Error, Result};
use crate::model::{dot, Generator, Sampler, ScalarDist, ScenarioProgram, StageSpec};
use crate::probkernel::inverse_regularized_incomplete_beta;
use crate::rng::{stage_chunk, stream, Purpose};
use crate::scenario_core::{draw_replication, ScenarioLp, SolveStatus};

/// Validation draws are counted in chunks of this size, each with its own
/// stream, so counts do not depend on the number of worker threads.
pub const VALIDATION_CHUNK: u64 = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEstimate {
    pub stage: usize,
    pub n_val: u64,
    pub violations: u64,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
}

/// Two-sided Clopper–Pearson interval at confidence `1 − α`.
pub fn clopper_pearson(violations: u64, n: u64, alpha: f64) -> Result<(f64, f64)> {
    if n == 0 || violations > n {
        return domain(format!("{violations} successes out of {n} trials"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha {alpha} outside (0, 1)"));
    }
    let (k, n) = (violations as f64, n as f64);
    let low = if violations == 0 {
        0.0
    } else {
        inverse_regularized_incomplete_beta(alpha / 2.0, k, n - k + 1.0)?
    };
    let high = if violations as f64 == n {
        1.0
    } else {
        inverse_regularized_incomplete_beta(1.0 - alpha / 2.0, k + 1.0, n - k)?
    };
    Ok((low, high))
}

/// Counts strict violations `f(x, δ) > 0` over `n_val` fresh outcomes from
/// the validation stream of `(seed, replication, stage)`.
pub fn count_violations(
    x: &[f64],
    stage: &StageSpec,
    stage_index: usize,
    n_val: u64,
    seed: u64,
    replication: u64,
) -> Result<u64> {
    let sampler = stage
        .sampler
        .as_ref()
        .ok_or_else(|| Error::Config(format!("stage {stage_index} has no sampler")))?;
    let d = x.len();
    let chunks = n_val.div_ceil(VALIDATION_CHUNK);
    let count = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Purpose::Validation, replication, stage_chunk(stage_index, c));
            let len = VALIDATION_CHUNK.min(n_val - c * VALIDATION_CHUNK);
            (0..len)
                .filter(|_| stage.constraint_value(d, x, &sampler.sample(&mut rng)) > 0.0)
                .count() as u64
        })
        .sum();
    Ok(count)
}

/// Monte-Carlo estimate of a stage's violation probability at `x`.
pub fn estimate_violation(
    x: &[f64],
    stage: &StageSpec,
    stage_index: usize,
    n_val: u64,
    alpha: f64,
    seed: u64,
) -> Result<ViolationEstimate> {
    if n_val == 0 {
        return domain("n_val must be at least 1");
    }
    let violations = count_violations(x, stage, stage_index, n_val, seed, 0)?;
    let (ci_low, ci_high) = clopper_pearson(violations, n_val, alpha)?;
    Ok(ViolationEstimate {
        stage: stage_index,
        n_val,
        violations,
        point: violations as f64 / n_val as f64,
        ci_low,
        ci_high,
        alpha,
    })
}

fn uniform_tail(t: f64, beta: f64, low: f64, high: f64) -> f64 {
    let width = high - low;
    let p = if beta > 0.0 { (t - low) / width } else { (high - t) / width };
    p.clamp(0.0, 1.0)
}

/// Closed-form violation probability where the stage structure allows it:
/// a single fixed row whose right-hand side moves with one uniform
/// component, or cuboid containment under independent normal components.
pub fn exact_violation(x: &[f64], stage: &StageSpec) -> Option<f64> {
    let sampler = stage.sampler.as_ref()?;
    match &stage.generator {
        Generator::Linear { rows } => {
            let [row] = rows.as_slice() else { return None };
            if row.a_delta.iter().any(|v| v.iter().any(|&c| c != 0.0)) {
                return None;
            }
            let moving: Vec<(usize, f64)> =
                row.b_delta.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
            let [(j, beta)] = moving.as_slice() else { return None };
            let ScalarDist::Uniform { low, high } = sampler.component(*j)? else { return None };
            if high <= low {
                return None;
            }
            // a·x > b + β δ  ⇔  δ < t (β > 0) or δ > t (β < 0)
            let t = (dot(&row.a, x) - row.b) / beta;
            Some(uniform_tail(t, *beta, low, high))
        }
        Generator::Cuboid { coordinate } => {
            let n = (x.len() - 1) / 2;
            let coords: Vec<usize> = match coordinate {
                Some(c) => vec![*c],
                None => (0..n).collect(),
            };
            let mut inside = 1.0;
            for c in coords {
                let comp = if sampler.outcome_dimension() == 1 { 0 } else { c };
                let ScalarDist::Normal { mean, std } = sampler.component(comp)? else { return None };
                let dist = Normal::new(mean, std).ok()?;
                let (lo, hi) = (x[c] - 0.5 * x[n + c], x[c] + 0.5 * x[n + c]);
                inside *= (dist.cdf(hi) - dist.cdf(lo)).max(0.0);
            }
            if matches!(sampler, Sampler::Normal { .. } | Sampler::Product { .. }) {
                Some(1.0 - inside)
            } else {
                None
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ViolationMethod {
    MonteCarlo { n_val: u64 },
    /// Closed form where available, Monte-Carlo with `fallback_n_val` draws
    /// otherwise.
    Exact { fallback_n_val: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyOptions {
    pub method: ViolationMethod,
    pub discard: Option<RemovalAlgorithm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub replication: u64,
    pub stage: usize,
    pub v_hat: f64,
    pub exceeds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Survey {
    pub replications: u64,
    pub infeasible: u64,
    pub records: Vec<SurveyRecord>,
    /// Per stage, fraction of feasible replications with `V̂_i > ε_i`.
    pub exceed_frequency: Vec<f64>,
    /// Objective of each feasible replication, in replication order.
    pub objectives: Vec<f64>,
}

impl Survey {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replication,stage,v_hat,exceeds\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{:.12e},{}\n", r.replication, r.stage, r.v_hat, r.exceeds as u8));
        }
        out
    }
}

/// Repeats draw → solve → (discard) → estimate `replications` times.
/// Replication r uses seeds derived from `(seed, r)` only.
pub fn violation_survey(
    program: &ScenarioProgram,
    plan: &SampleSizePlan,
    replications: u64,
    seed: u64,
    options: &SurveyOptions,
) -> Result<Survey> {
    program.validate()?;
    let sizes = plan.sizes();
    let discards: Vec<usize> = plan.stages.iter().map(|s| s.r as usize).collect();
    let one = |rep: u64| -> Result<Option<(f64, Vec<f64>)>> {
        let sample = draw_replication(program, &sizes, seed, rep)?;
        let lp = ScenarioLp::new(program, &sample)?;
        let solution = lp.solve(&lp.full_mask())?;
        if solution.status != SolveStatus::Optimal {
            return Ok(None);
        }
        let solution = match options.discard {
            Some(alg) if discards.iter().any(|&r| r > 0) => remove(alg, program, &sample, &discards)?.reduced_solution,
            _ => solution,
        };
        let v = program
            .stages
            .iter()
            .enumerate()
            .map(|(i, stage)| {
                let mc = |n_val| -> Result<f64> {
                    Ok(count_violations(&solution.x, stage, i, n_val, seed, rep)? as f64 / n_val as f64)
                };
                match options.method {
                    ViolationMethod::MonteCarlo { n_val } => mc(n_val),
                    ViolationMethod::Exact { fallback_n_val } => match exact_violation(&solution.x, stage) {
                        Some(v) => Ok(v),
                        None => mc(fallback_n_val),
                    },
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Some((solution.objective, v)))
    };
    let results: Vec<Option<(f64, Vec<f64>)>> =
        (0..replications).into_par_iter().map(one).collect::<Result<_>>()?;

    let n = program.stages.len();
    let mut records = Vec::new();
    let mut exceed = vec![0u64; n];
    let mut objectives = Vec::new();
    let mut feasible = 0u64;
    for (rep, res) in results.into_iter().enumerate() {
        let Some((obj, v)) = res else { continue };
        feasible += 1;
        objectives.push(obj);
        for (stage, &v_hat) in v.iter().enumerate() {
            let exceeds = v_hat > program.stages[stage].eps;
            exceed[stage] += exceeds as u64;
            records.push(SurveyRecord { replication: rep as u64, stage, v_hat, exceeds });
        }
    }
    Ok(Survey {
        replications,
        infeasible: replications - feasible,
        records,
        exceed_frequency: exceed
            .iter()
            .map(|&e| if feasible == 0 { 0.0 } else { e as f64 / feasible as f64 })
            .collect(),
        objectives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineRow;

    fn threshold_stage() -> StageSpec {
        StageSpec {
            eps: 0.1,
            zeta_bar: Some(1),
            monotone: true,
            discard: 0,
            generator: Generator::Linear {
                rows: vec![AffineRow { a: vec![-1.0], a_delta: vec![], b: 0.0, b_delta: vec![-1.0] }],
            },
            sampler: Some(Sampler::Uniform { low: vec![0.0], high: vec![1.0] }),
        }
    }

    #[test]
    fn extreme_count_intervals() {
        let (lo, hi) = clopper_pearson(1, 1, 0.05).unwrap();
        assert!((lo - 0.025).abs() < 1e-12);
        assert_eq!(hi, 1.0);
        let (lo, hi) = clopper_pearson(0, 10, 0.05).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-12);
    }

    #[test]
    fn interior_point_never_violates() {
        let e = estimate_violation(&[2.0], &threshold_stage(), 0, 10_000, 0.05, 1).unwrap();
        assert_eq!(e.violations, 0);
        assert_eq!(e.ci_low, 0.0);
        assert!(e.ci_high > 0.0 && e.ci_high < 1e-3);
    }

    #[test]
    fn exact_threshold_violation() {
        assert!((exact_violation(&[0.9], &threshold_stage()).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(exact_violation(&[1.5], &threshold_stage()).unwrap(), 0.0);
    }

    #[test]
    fn chunking_is_consistent() {
        let stage = threshold_stage();
        let a = count_violations(&[0.5], &stage, 0, 200_000, 3, 0).unwrap();
        let b = count_violations(&[0.5], &stage, 0, 200_000, 3, 0).unwrap();
        assert_eq!(a, b);
        assert!((a as f64 / 2e5 - 0.5).abs() < 0.005);
    }
}
