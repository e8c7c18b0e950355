//! Removing sampled constraints after the fact to improve the objective.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpStatus, RowRef};
use crate::model::{LinearRow, MultiSample, ScenarioProgram};
use crate::rng::{stream, Purpose};
use crate::scenario_core::{SampleMask, ScenarioLp, Solution, ACTIVE_TOL};

/// Default cap on the number of subset combinations `remove_optimal` visits.
pub const OPTIMAL_REMOVAL_GUARD: u128 = 1_000_000;

const OBJECTIVE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalAlgorithm {
    Optimal,
    Greedy,
    Marginal,
}

/// Whether the discarding guarantee applies to a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssumptionStatus {
    /// Nothing was removed from the stage.
    NotApplicable,
    ViolatedByReduced,
    MonotoneDeclared,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalResult {
    pub algorithm: RemovalAlgorithm,
    /// Removed sample indices per stage, sorted.
    pub removed: Vec<Vec<usize>>,
    pub reduced_solution: Solution,
    pub original_objective: f64,
    pub objective_improvement: f64,
    pub assumption: Vec<AssumptionStatus>,
    /// Objective after each sequential step (empty for optimal removal).
    pub trace: Vec<f64>,
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - OBJECTIVE_TIE * (1.0 + incumbent.abs())
}

fn check_counts(lp: &ScenarioLp<'_>, r: &[usize]) -> Result<()> {
    if r.len() != lp.sizes().len() {
        return Err(Error::Precondition(format!("{} discard counts for {} stages", r.len(), lp.sizes().len())));
    }
    for (i, (&ri, &k)) in r.iter().zip(lp.sizes()).enumerate() {
        if ri >= k {
            return Err(Error::Precondition(format!("stage {i}: cannot discard {ri} of {k} samples")));
        }
    }
    Ok(())
}

fn finish(
    algorithm: RemovalAlgorithm,
    program: &ScenarioProgram,
    lp: &ScenarioLp<'_>,
    original: &Solution,
    mask: &SampleMask,
    reduced: Solution,
    trace: Vec<f64>,
) -> RemovalResult {
    let removed: Vec<Vec<usize>> = mask
        .keep
        .iter()
        .map(|k| k.iter().enumerate().filter(|(_, &keep)| !keep).map(|(i, _)| i).collect())
        .collect();
    let assumption = assumption_status(program, lp, &removed, &reduced);
    RemovalResult {
        algorithm,
        removed,
        original_objective: original.objective,
        objective_improvement: original.objective - reduced.objective,
        reduced_solution: reduced,
        assumption,
        trace,
    }
}

/// One sequential removal: the sample (within remaining budgets) whose
/// removal gives the lowest objective. Only tight samples can lower it; of
/// the slack ones, the lowest index stands in for all.
fn greedy_step(
    lp: &ScenarioLp<'_>,
    mask: &SampleMask,
    current: &Solution,
    budget: &[usize],
    active_only: bool,
) -> Result<Option<(usize, usize, Solution)>> {
    let mut best: Option<(usize, usize, Solution)> = None;
    for (stage, &left) in budget.iter().enumerate() {
        if left == 0 {
            continue;
        }
        let active = &current.active[stage];
        let first_slack = (0..mask.keep[stage].len()).find(|&k| mask.keep[stage][k] && !active.contains(&k));
        let mut candidates: Vec<usize> = active.iter().copied().filter(|&k| mask.keep[stage][k]).collect();
        if let (Some(k), false) = (first_slack, active_only) {
            candidates.push(k);
        }
        candidates.sort_unstable();
        for index in candidates {
            let sol = if active.contains(&index) {
                lp.solve(&mask.without(stage, index))?
            } else {
                current.clone()
            };
            let replace = match &best {
                None => true,
                Some((_, _, b)) => better(sol.objective, b.objective),
            };
            if replace {
                best = Some((stage, index, sol));
            }
        }
    }
    Ok(best)
}

/// Removes `r[i]` samples from stage i, one at a time, each time taking the
/// sample whose removal lowers the objective most.
pub fn remove_greedy(program: &ScenarioProgram, sample: &MultiSample, r: &[usize]) -> Result<RemovalResult> {
    let lp = ScenarioLp::new(program, sample)?;
    check_counts(&lp, r)?;
    let mut mask = lp.full_mask();
    let original = lp.solve(&mask)?;
    require_optimal(&original)?;
    let mut current = original.clone();
    let mut budget = r.to_vec();
    let mut trace = Vec::new();
    for _ in 0..r.iter().sum::<usize>() {
        let (stage, index, sol) = greedy_step(&lp, &mask, &current, &budget, false)?
            .ok_or_else(|| Error::Numerical("no removable sample left".into()))?;
        mask.keep[stage][index] = false;
        budget[stage] -= 1;
        current = sol;
        trace.push(current.objective);
    }
    Ok(finish(RemovalAlgorithm::Greedy, program, &lp, &original, &mask, current, trace))
}

/// Sequential removal of the tight sample with the largest multiplier.
/// When every multiplier vanishes (degenerate vertex) the step falls back
/// to a greedy search over the tight samples.
pub fn remove_marginal(program: &ScenarioProgram, sample: &MultiSample, r: &[usize]) -> Result<RemovalResult> {
    let lp = ScenarioLp::new(program, sample)?;
    check_counts(&lp, r)?;
    let mut mask = lp.full_mask();
    let original = lp.solve(&mask)?;
    require_optimal(&original)?;
    let mut current = original.clone();
    let mut budget = r.to_vec();
    let mut trace = Vec::new();
    for _ in 0..r.iter().sum::<usize>() {
        let mut pick: Option<(usize, usize, f64)> = None;
        for (stage, &left) in budget.iter().enumerate() {
            if left == 0 {
                continue;
            }
            for &index in &current.active[stage] {
                let m = current.duals.samples[stage][index];
                if m > 1e-12 && pick.is_none_or(|(_, _, best)| m > best * (1.0 + OBJECTIVE_TIE)) {
                    pick = Some((stage, index, m));
                }
            }
        }
        let (stage, index, sol) = match pick {
            Some((stage, index, _)) => (stage, index, lp.solve(&mask.without(stage, index))?),
            None => match greedy_step(&lp, &mask, &current, &budget, true)? {
                Some(step) => step,
                None => greedy_step(&lp, &mask, &current, &budget, false)?
                    .ok_or_else(|| Error::Numerical("no removable sample left".into()))?,
            },
        };
        mask.keep[stage][index] = false;
        budget[stage] -= 1;
        current = sol;
        trace.push(current.objective);
    }
    Ok(finish(RemovalAlgorithm::Marginal, program, &lp, &original, &mask, current, trace))
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..r).rev().find(|&p| idx[p] < n - r + p) else { break };
        idx[pos] += 1;
        for q in pos + 1..r {
            idx[q] = idx[q - 1] + 1;
        }
    }
    out
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    let k = k.min(n - k) as u128;
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c.saturating_mul(n as u128 - k + i) / i;
    }
    c
}

/// Exhaustive search over every choice of `r[i]` samples per stage for the
/// lowest reduced objective. Ties go to the lexicographically smallest
/// removed-index tuple.
pub fn remove_optimal(
    program: &ScenarioProgram,
    sample: &MultiSample,
    r: &[usize],
    guard: u128,
) -> Result<RemovalResult> {
    let lp = ScenarioLp::new(program, sample)?;
    check_counts(&lp, r)?;
    let total = lp
        .sizes()
        .iter()
        .zip(r)
        .fold(1u128, |acc, (&k, &ri)| acc.saturating_mul(binomial_u128(k, ri)));
    if total > guard {
        return Err(Error::SizeGuard { what: "removal combinations", actual: total, limit: guard });
    }
    let full = lp.full_mask();
    let original = lp.solve(&full)?;
    require_optimal(&original)?;
    let per_stage: Vec<Vec<Vec<usize>>> = lp.sizes().iter().zip(r).map(|(&k, &ri)| combinations(k, ri)).collect();
    let mask_for = |code: usize| {
        let mut mask = full.clone();
        let mut rest = code;
        for (stage, combos) in per_stage.iter().enumerate().rev() {
            let c = &combos[rest % combos.len()];
            rest /= combos.len();
            for &k in c {
                mask.keep[stage][k] = false;
            }
        }
        mask
    };
    let objectives: Vec<f64> = (0..total as usize)
        .into_par_iter()
        .map(|code| lp.solve(&mask_for(code)).map(|s| s.objective))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (code, &obj) in objectives.iter().enumerate() {
        if better(obj, objectives[best]) {
            best = code;
        }
    }
    let mask = mask_for(best);
    let reduced = lp.solve(&mask)?;
    Ok(finish(RemovalAlgorithm::Optimal, program, &lp, &original, &mask, reduced, Vec::new()))
}

pub fn remove(
    algorithm: RemovalAlgorithm,
    program: &ScenarioProgram,
    sample: &MultiSample,
    r: &[usize],
) -> Result<RemovalResult> {
    match algorithm {
        RemovalAlgorithm::Optimal => remove_optimal(program, sample, r, OPTIMAL_REMOVAL_GUARD),
        RemovalAlgorithm::Greedy => remove_greedy(program, sample, r),
        RemovalAlgorithm::Marginal => remove_marginal(program, sample, r),
    }
}

fn require_optimal(s: &Solution) -> Result<()> {
    if s.is_optimal() {
        Ok(())
    } else {
        Err(Error::Precondition("constraint removal needs a feasible scenario program".into()))
    }
}

fn assumption_status(
    program: &ScenarioProgram,
    lp: &ScenarioLp<'_>,
    removed: &[Vec<usize>],
    reduced: &Solution,
) -> Vec<AssumptionStatus> {
    removed
        .iter()
        .enumerate()
        .map(|(stage, list)| {
            if list.is_empty() {
                AssumptionStatus::NotApplicable
            } else if list.iter().all(|&k| lp.sample_value(stage, k, &reduced.x) > ACTIVE_TOL) {
                AssumptionStatus::ViolatedByReduced
            } else if program.stages[stage].monotone {
                AssumptionStatus::MonotoneDeclared
            } else {
                AssumptionStatus::Fail
            }
        })
        .collect()
}

/// Per stage: does the discarding guarantee apply to this removal?
pub fn check_discard_assumption(
    program: &ScenarioProgram,
    sample: &MultiSample,
    result: &RemovalResult,
) -> Result<Vec<AssumptionStatus>> {
    let lp = ScenarioLp::new(program, sample)?;
    Ok(assumption_status(program, &lp, &result.removed, &result.reduced_solution))
}

/// Half-width of the box standing in for unbounded directions when
/// computing the stage-only minimizer. Coordinates that carry cost get
/// the square of it, so the box clips the descent direction last and `x̂`
/// stays on the sampled boundary like its extended-real limit.
pub const MONOTONICITY_GUARD: f64 = 1e3;
const MAX_PROBE_ATTEMPTS: usize = 1000;
const MAX_TRIAL_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: u64,
    pub outcomes: Vec<Vec<f64>>,
    pub probe: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub delta: Vec<f64>,
    /// `f(probe, δ) > 0` while `f(x_hat, δ) ≤ 0`.
    pub probe_value: f64,
    pub x_hat_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    pub trials: u64,
    /// Trials where no probe point could be placed in the sampled set.
    pub skipped: u64,
    pub counterexample: Option<Counterexample>,
}

fn max_value(rows: &[LinearRow], x: &[f64]) -> f64 {
    rows.iter()
        .map(|r| crate::model::dot(&r.a, x) - r.b)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Searches for a violation of the monotonicity property of one stage.
///
/// Each trial samples a handful of outcomes, computes the stage-only
/// cost-minimal point `x̂` (on a wide guard box, so unbounded directions
/// behave like extended reals), places a probe point uniformly in the
/// sampled feasible set within the program box, and draws one fresh
/// outcome δ. A counterexample is δ cutting the probe but not `x̂`.
pub fn monotonicity_empirical_check(
    program: &ScenarioProgram,
    stage: usize,
    trials: u64,
    seed: u64,
) -> Result<MonotonicityReport> {
    program.validate()?;
    let spec = program
        .stages
        .get(stage)
        .ok_or_else(|| Error::Precondition(format!("stage {stage} out of range")))?;
    let sampler = spec
        .sampler
        .as_ref()
        .ok_or_else(|| Error::Config(format!("stage {stage} has no sampler")))?;
    let d = program.dimension;
    let guard_hi: Vec<f64> = program
        .cost
        .iter()
        .map(|&c| if c != 0.0 { MONOTONICITY_GUARD * MONOTONICITY_GUARD } else { MONOTONICITY_GUARD })
        .collect();
    let guard_lo: Vec<f64> = guard_hi.iter().map(|g| -g).collect();

    let trial = |t: u64| -> Result<Option<Option<Counterexample>>> {
        let mut rng = stream(seed, Purpose::Monotonicity, t, stage as u64);
        let k = rng.random_range(1..=MAX_TRIAL_SAMPLES);
        let outcomes: Vec<Vec<f64>> = (0..k).map(|_| sampler.sample(&mut rng)).collect();
        let rows: Vec<LinearRow> = outcomes.iter().flat_map(|o| spec.rows(d, o)).collect();
        let refs: Vec<RowRef<'_>> = rows.iter().map(|r| RowRef { a: &r.a, b: r.b }).collect();
        let hat = lp::solve(&program.cost, &guard_lo, &guard_hi, &refs)?;
        if hat.status != LpStatus::Optimal {
            return Ok(None);
        }
        let probe = (0..MAX_PROBE_ATTEMPTS).find_map(|_| {
            let xi: Vec<f64> = program
                .bounds
                .lower
                .iter()
                .zip(&program.bounds.upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect();
            (max_value(&rows, &xi) <= 0.0).then_some(xi)
        });
        let Some(probe) = probe else { return Ok(None) };
        let delta = sampler.sample(&mut rng);
        let probe_value = spec.constraint_value(d, &probe, &delta);
        let x_hat_value = spec.constraint_value(d, &hat.x, &delta);
        let found = probe_value > ACTIVE_TOL && x_hat_value < -ACTIVE_TOL;
        Ok(Some(found.then(|| Counterexample {
            trial: t,
            outcomes,
            probe,
            x_hat: hat.x,
            delta,
            probe_value,
            x_hat_value,
        })))
    };

    let results: Vec<Option<Option<Counterexample>>> =
        (0..trials).into_par_iter().map(trial).collect::<Result<_>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count() as u64;
    let counterexample = results.into_iter().flatten().flatten().next();
    Ok(MonotonicityReport { monotone: counterexample.is_none(), trials, skipped, counterexample })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AffineRow, BoxBounds, Generator, Sampler, StageSpec};

    fn lower_bound_program(monotone: bool) -> ScenarioProgram {
        ScenarioProgram {
            dimension: 1,
            cost: vec![1.0],
            bounds: BoxBounds { lower: vec![-10.0], upper: vec![10.0] },
            deterministic_rows: vec![],
            stages: vec![StageSpec {
                eps: 0.1,
                zeta_bar: Some(1),
                monotone,
                discard: 2,
                generator: Generator::Linear {
                    rows: vec![AffineRow { a: vec![-1.0], a_delta: vec![], b: 0.0, b_delta: vec![-1.0] }],
                },
                sampler: Some(Sampler::Uniform { low: vec![0.0], high: vec![1.0] }),
            }],
        }
    }

    #[test]
    fn order_statistic_removal() {
        let p = lower_bound_program(false);
        let ms = MultiSample::scalar(&[0.9, 0.8, 0.5, 0.3]);
        for alg in [RemovalAlgorithm::Optimal, RemovalAlgorithm::Greedy, RemovalAlgorithm::Marginal] {
            let res = remove(alg, &p, &ms, &[2]).unwrap();
            assert_eq!(res.removed, vec![vec![0, 1]], "{alg:?}");
            assert!((res.reduced_solution.x[0] - 0.5).abs() < 1e-15);
            assert!((res.objective_improvement - 0.4).abs() < 1e-12);
            assert_eq!(res.assumption, vec![AssumptionStatus::ViolatedByReduced]);
        }
    }

    #[test]
    fn zero_removal_is_identity() {
        let p = lower_bound_program(false);
        let ms = MultiSample::scalar(&[0.9, 0.8]);
        let res = remove_greedy(&p, &ms, &[0]).unwrap();
        assert_eq!(res.objective_improvement, 0.0);
        assert_eq!(res.assumption, vec![AssumptionStatus::NotApplicable]);
    }

    #[test]
    fn assumption_falls_back_to_declaration() {
        // A removal the reduced solution still satisfies: the guarantee
        // then rests on the monotone flag alone.
        for (monotone, expect) in [(true, AssumptionStatus::MonotoneDeclared), (false, AssumptionStatus::Fail)] {
            let p = lower_bound_program(monotone);
            let ms = MultiSample::scalar(&[0.9, 0.3, 0.2]);
            let mut res = remove_greedy(&p, &ms, &[1]).unwrap();
            // Swap in the slack sample 2 as the removed one.
            res.removed = vec![vec![2]];
            assert_eq!(check_discard_assumption(&p, &ms, &res).unwrap(), vec![expect]);
        }
    }

    #[test]
    fn optimal_guard() {
        let p = lower_bound_program(false);
        let ms = MultiSample::scalar(&[0.1; 12]);
        let err = remove_optimal(&p, &ms, &[6], 100).unwrap_err();
        assert!(matches!(err, Error::SizeGuard { actual: 924, .. }));
    }

    #[test]
    fn combination_listing() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(binomial_u128(12, 6), 924);
    }

    #[test]
    fn lower_bound_family_is_monotone() {
        let p = lower_bound_program(true);
        let report = monotonicity_empirical_check(&p, 0, 2000, 5).unwrap();
        assert!(report.monotone);
    }
}
