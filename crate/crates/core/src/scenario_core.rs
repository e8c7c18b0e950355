//! Sampling, solving and support analysis of scenario programs.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::SampleSizePlan;
use crate::error::{Error, Result};
use crate::lp::{self, LpStatus, RowRef};
use crate::model::{dot, LinearRow, MultiSample, Provenance, ScenarioProgram};
use crate::rng::{stream, Purpose};

/// Optimizer displacement that counts as "the solution changed".
pub const DISPLACEMENT_TOL: f64 = 1e-7;
/// Slack below which a row counts as tight.
pub const ACTIVE_TOL: f64 = 1e-9;
/// Half-width of the box replacing the deterministic set when it is removed.
pub const DOMAIN_GUARD: f64 = 1e6;
/// Largest number of sampled constraints accepted by exhaustive searches.
pub const BRUTE_FORCE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// The optimizer rests on the artificial box used when the
    /// deterministic set is removed.
    UnboundedGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duals {
    /// Summed multiplier of each sample's rows, per stage.
    pub samples: Vec<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub deterministic: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Per stage, samples with at least one tight row.
    pub active: Vec<Vec<usize>>,
    pub duals: Duals,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// ∞-norm distance between optimizers; infinite if either is not optimal
    /// or the statuses differ.
    pub fn displacement(&self, other: &Solution) -> f64 {
        if self.status != other.status || self.status == SolveStatus::Infeasible {
            return f64::INFINITY;
        }
        self.x
            .iter()
            .zip(&other.x)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Draws `plan`'s sample sizes for replication 0.
pub fn draw_multisample(program: &ScenarioProgram, plan: &SampleSizePlan, seed: u64) -> Result<MultiSample> {
    draw_replication(program, &plan.sizes(), seed, 0)
}

/// Draws `sizes[i]` outcomes for stage i. Stage i reads only its own stream
/// `(seed, training, replication, i)`, so results do not depend on how
/// replications are scheduled.
pub fn draw_replication(program: &ScenarioProgram, sizes: &[usize], seed: u64, replication: u64) -> Result<MultiSample> {
    if sizes.len() != program.stages.len() {
        return Err(Error::Config(format!("{} sample sizes for {} stages", sizes.len(), program.stages.len())));
    }
    let mut outcomes = Vec::with_capacity(sizes.len());
    for (i, (stage, &k)) in program.stages.iter().zip(sizes).enumerate() {
        let sampler = stage
            .sampler
            .as_ref()
            .ok_or_else(|| Error::Config(format!("stage {i} has no sampler")))?;
        let mut rng = stream(seed, Purpose::Training, replication, i as u64);
        outcomes.push((0..k).map(|_| sampler.sample(&mut rng)).collect::<Vec<_>>());
    }
    let mut rng = stream(seed, Purpose::TieBreak, replication, 0);
    let mut tie_breaks: Vec<Vec<f64>> = sizes.iter().map(|&k| (0..k).map(|_| rng.random()).collect()).collect();
    let mut domain_tie: f64 = rng.random();
    // Regenerate exact collisions until all values are distinct.
    loop {
        let mut all: Vec<f64> = tie_breaks.iter().flatten().copied().chain([domain_tie]).collect();
        all.sort_by(f64::total_cmp);
        let Some(dup) = all.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]) else { break };
        let mut seen = false;
        for v in tie_breaks.iter_mut().flatten().chain(std::iter::once(&mut domain_tie)) {
            if *v == dup {
                if seen {
                    *v = rng.random();
                }
                seen = true;
            }
        }
    }
    Ok(MultiSample {
        outcomes,
        tie_breaks,
        domain_tie,
        provenance: Some(Provenance { seed, replication }),
    })
}

/// Which samples (and whether the deterministic set) enter a solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMask {
    pub keep: Vec<Vec<bool>>,
    pub domain: bool,
}

impl SampleMask {
    pub fn full(sizes: &[usize]) -> Self {
        SampleMask { keep: sizes.iter().map(|&k| vec![true; k]).collect(), domain: true }
    }

    pub fn empty(sizes: &[usize]) -> Self {
        SampleMask { keep: sizes.iter().map(|&k| vec![false; k]).collect(), domain: false }
    }

    pub fn without(&self, stage: usize, index: usize) -> Self {
        let mut m = self.clone();
        m.keep[stage][index] = false;
        m
    }

    pub fn set(&mut self, member: Member, value: bool) {
        match member {
            Member::Domain => self.domain = value,
            Member::Sample { stage, index } => self.keep[stage][index] = value,
        }
    }

    pub fn contains(&self, member: Member) -> bool {
        match member {
            Member::Domain => self.domain,
            Member::Sample { stage, index } => self.keep[stage][index],
        }
    }
}

/// A removable constraint: the deterministic set or one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Member {
    Domain,
    Sample { stage: usize, index: usize },
}

/// Scenario program with every sampled row assembled once, solvable under
/// any sample mask.
pub struct ScenarioLp<'p> {
    program: &'p ScenarioProgram,
    rows: Vec<LinearRow>,
    /// Row ranges per stage per sample.
    ranges: Vec<Vec<Range<usize>>>,
    sizes: Vec<usize>,
}

impl<'p> ScenarioLp<'p> {
    pub fn new(program: &'p ScenarioProgram, sample: &MultiSample) -> Result<Self> {
        program.validate()?;
        if sample.outcomes.len() != program.stages.len() {
            return Err(Error::Config(format!(
                "sample has {} stages, program has {}",
                sample.outcomes.len(),
                program.stages.len()
            )));
        }
        let d = program.dimension;
        let mut rows = Vec::new();
        let mut ranges = Vec::with_capacity(program.stages.len());
        for (stage, outcomes) in program.stages.iter().zip(&sample.outcomes) {
            let mut stage_ranges = Vec::with_capacity(outcomes.len());
            for delta in outcomes {
                let start = rows.len();
                rows.extend(stage.rows(d, delta));
                stage_ranges.push(start..rows.len());
            }
            ranges.push(stage_ranges);
        }
        Ok(ScenarioLp { program, rows, ranges, sizes: sample.sizes(), })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn program(&self) -> &ScenarioProgram {
        self.program
    }

    pub fn full_mask(&self) -> SampleMask {
        SampleMask::full(&self.sizes)
    }

    /// Slack-free value `max_rows (a·x − b)` of one sample at `x`.
    pub fn sample_value(&self, stage: usize, index: usize, x: &[f64]) -> f64 {
        self.rows[self.ranges[stage][index].clone()]
            .iter()
            .map(|r| dot(&r.a, x) - r.b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn solve(&self, mask: &SampleMask) -> Result<Solution> {
        let p = self.program;
        let d = p.dimension;
        let mut refs: Vec<RowRef<'_>> = Vec::new();
        let mut owners: Vec<(usize, usize)> = Vec::new();
        let det = if mask.domain { p.deterministic_rows.len() } else { 0 };
        for r in &p.deterministic_rows[..det] {
            refs.push(RowRef { a: &r.a, b: r.b });
        }
        for (i, stage_ranges) in self.ranges.iter().enumerate() {
            for (k, range) in stage_ranges.iter().enumerate() {
                if mask.keep[i][k] {
                    for r in &self.rows[range.clone()] {
                        refs.push(RowRef { a: &r.a, b: r.b });
                        owners.push((i, k));
                    }
                }
            }
        }
        let (lower, upper) = if mask.domain {
            (p.bounds.lower.clone(), p.bounds.upper.clone())
        } else {
            (vec![-DOMAIN_GUARD; d], vec![DOMAIN_GUARD; d])
        };
        let sol = lp::solve(&p.cost, &lower, &upper, &refs)?;

        let mut sample_duals: Vec<Vec<f64>> = self.sizes.iter().map(|&k| vec![0.0; k]).collect();
        let mut active: Vec<Vec<usize>> = vec![Vec::new(); self.sizes.len()];
        if sol.status == LpStatus::Optimal {
            for (pos, &(i, k)) in owners.iter().enumerate() {
                sample_duals[i][k] += sol.row_duals[det + pos];
            }
            for &j in &sol.active_rows {
                if j >= det {
                    let (i, k) = owners[j - det];
                    if active[i].last() != Some(&k) {
                        active[i].push(k);
                    }
                }
            }
        }
        let status = match sol.status {
            LpStatus::Infeasible => SolveStatus::Infeasible,
            LpStatus::Optimal if !mask.domain && sol.x.iter().any(|v| v.abs() >= DOMAIN_GUARD * (1.0 - 1e-12)) => {
                SolveStatus::UnboundedGuard
            }
            LpStatus::Optimal => SolveStatus::Optimal,
        };
        Ok(Solution {
            status,
            x: sol.x,
            objective: sol.objective,
            active,
            duals: Duals {
                samples: sample_duals,
                lower: sol.lower_duals,
                upper: sol.upper_duals,
                deterministic: sol.row_duals[..det].to_vec(),
            },
        })
    }

    /// Kept members whose removal moves the optimizer of the masked problem.
    /// Only tight samples are tried; a slack sample can be dropped without
    /// changing the optimum.
    pub fn support_members(&self, mask: &SampleMask, solution: &Solution) -> Result<Vec<Member>> {
        let mut out = Vec::new();
        if mask.domain {
            let mut reduced = mask.clone();
            reduced.domain = false;
            if self.solve(&reduced)?.displacement(solution) > DISPLACEMENT_TOL {
                out.push(Member::Domain);
            }
        }
        for (stage, active) in solution.active.iter().enumerate() {
            for &index in active {
                if !mask.keep[stage][index] {
                    continue;
                }
                if self.solve(&mask.without(stage, index))?.displacement(solution) > DISPLACEMENT_TOL {
                    out.push(Member::Sample { stage, index });
                }
            }
        }
        Ok(out)
    }
}

pub fn solve(program: &ScenarioProgram, sample: &MultiSample) -> Result<Solution> {
    let lp = ScenarioLp::new(program, sample)?;
    lp.solve(&lp.full_mask())
}

/// Per-stage support constraints of the full problem.
pub fn support_set(program: &ScenarioProgram, sample: &MultiSample, solution: &Solution) -> Result<Vec<Vec<usize>>> {
    if !solution.is_optimal() {
        return Err(Error::Precondition("support set requires an optimal solution".into()));
    }
    let lp = ScenarioLp::new(program, sample)?;
    let mut out = vec![Vec::new(); program.stages.len()];
    for m in lp.support_members(&lp.full_mask(), solution)? {
        if let Member::Sample { stage, index } = m {
            out[stage].push(index);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssentialSets {
    /// Every essential set, each sorted, in enumeration order.
    pub sets: Vec<Vec<Member>>,
    /// Smallest essential set, ties broken by the lowest tie-break sum.
    pub minimal: Vec<Member>,
}

fn tie_value(sample: &MultiSample, m: Member) -> f64 {
    match m {
        Member::Domain => sample.domain_tie,
        Member::Sample { stage, index } => sample.tie_breaks[stage][index],
    }
}

/// Visits every subset of `0..n` with at most `max_size` elements in
/// order of increasing size, lexicographically within a size.
fn for_each_subset(n: usize, max_size: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx: Vec<usize> = Vec::new();
    for size in 0..=max_size.min(n) {
        idx.clear();
        idx.extend(0..size);
        loop {
            f(&idx)?;
            let mut pos = size;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                if idx[pos] < n - size + pos {
                    idx[pos] += 1;
                    for q in pos + 1..size {
                        idx[q] = idx[q - 1] + 1;
                    }
                    pos = usize::MAX;
                    break;
                }
            }
            if pos != usize::MAX {
                break;
            }
        }
    }
    Ok(())
}

/// Enumerates essential sets by exhaustive search over subsets of at most
/// `max_size` members (the deterministic set counts as a member).
///
/// A convex program with a unique optimizer has at most `d` support
/// constraints, and every member of an essential set is a support
/// constraint of its reduced problem, so `max_size = d` loses nothing.
pub fn essential_sets_with_limit(
    program: &ScenarioProgram,
    sample: &MultiSample,
    max_size: usize,
) -> Result<EssentialSets> {
    let total: usize = sample.outcomes.iter().map(Vec::len).sum();
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard {
            what: "sampled constraints",
            actual: total as u128,
            limit: BRUTE_FORCE_LIMIT as u128,
        });
    }
    let lp = ScenarioLp::new(program, sample)?;
    let full = lp.solve(&lp.full_mask())?;
    if !full.is_optimal() {
        return Err(Error::Precondition("essential sets require an optimal full solution".into()));
    }
    let mut members = vec![Member::Domain];
    for (stage, &k) in lp.sizes().iter().enumerate() {
        members.extend((0..k).map(|index| Member::Sample { stage, index }));
    }
    let mut sets: Vec<Vec<Member>> = Vec::new();
    for_each_subset(members.len(), max_size, |subset| {
        let mut mask = SampleMask::empty(lp.sizes());
        for &s in subset {
            mask.set(members[s], true);
        }
        let reduced = lp.solve(&mask)?;
        if reduced.displacement(&full) > DISPLACEMENT_TOL {
            return Ok(());
        }
        let support = lp.support_members(&mask, &reduced)?;
        if subset.iter().all(|&s| support.contains(&members[s])) {
            sets.push(subset.iter().map(|&s| members[s]).collect());
        }
        Ok(())
    })?;
    let minimal = sets
        .iter()
        .min_by(|a, b| {
            a.len().cmp(&b.len()).then_with(|| {
                let sa: f64 = a.iter().map(|&m| tie_value(sample, m)).sum();
                let sb: f64 = b.iter().map(|&m| tie_value(sample, m)).sum();
                sa.total_cmp(&sb)
            })
        })
        .cloned()
        .ok_or_else(|| Error::Numerical("full constraint set yielded no essential subset".into()))?;
    Ok(EssentialSets { sets, minimal })
}

pub fn essential_sets_bruteforce(program: &ScenarioProgram, sample: &MultiSample) -> Result<EssentialSets> {
    essential_sets_with_limit(program, sample, program.dimension)
}

/// Support members of the full problem, deterministic set included.
pub fn support_members(program: &ScenarioProgram, sample: &MultiSample) -> Result<Vec<Member>> {
    let lp = ScenarioLp::new(program, sample)?;
    let full = lp.solve(&lp.full_mask())?;
    lp.support_members(&lp.full_mask(), &full)
}

/// Checks on one instance that an extra sample violated by the current
/// optimizer belongs to the minimal essential set of the augmented problem.
pub fn sampling_lemma_check(
    program: &ScenarioProgram,
    sample: &MultiSample,
    extra: &[f64],
    stage: usize,
) -> Result<bool> {
    if stage >= program.stages.len() {
        return Err(Error::Precondition(format!("stage {stage} out of range")));
    }
    let x = solve(program, sample)?;
    if !x.is_optimal() {
        return Err(Error::Precondition("sampling lemma check requires a feasible instance".into()));
    }
    let value = program.stages[stage].constraint_value(program.dimension, &x.x, extra);
    if value <= ACTIVE_TOL {
        return Ok(true);
    }
    let mut augmented = sample.clone();
    let top = augmented
        .tie_breaks
        .iter()
        .flatten()
        .copied()
        .fold(augmented.domain_tie, f64::max);
    augmented.outcomes[stage].push(extra.to_vec());
    augmented.tie_breaks[stage].push(top + (1.0 - top) / 2.0);
    let index = augmented.outcomes[stage].len() - 1;
    let sets = essential_sets_bruteforce(program, &augmented)?;
    Ok(sets.minimal.contains(&Member::Sample { stage, index }))
}

fn rank_from_singular(values: impl Iterator<Item = f64>) -> usize {
    let values: Vec<f64> = values.collect();
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * top.max(1.0);
    values.iter().filter(|v| v.abs() > tol).count()
}

/// Dimension of the span of the given row vectors.
pub fn support_rank_linear(rows: &[Vec<f64>]) -> usize {
    let Some(first) = rows.first() else { return 0 };
    let m = DMatrix::from_fn(rows.len(), first.len(), |i, k| rows[i].get(k).copied().unwrap_or(0.0));
    rank_from_singular(m.singular_values().iter().copied())
}

/// Rank of a symmetric positive semidefinite matrix given as rows.
pub fn support_rank_quadratic(q: &[Vec<f64>]) -> Result<usize> {
    let n = q.len();
    if q.iter().any(|r| r.len() != n) {
        return Err(Error::Domain("matrix must be square".into()));
    }
    if n == 0 {
        return Ok(0);
    }
    let m = DMatrix::from_fn(n, n, |i, k| q[i][k]);
    let scale = m.amax().max(1.0);
    if (0..n).any(|i| (0..n).any(|k| (m[(i, k)] - m[(k, i)]).abs() > 1e-10 * scale)) {
        return Err(Error::Domain("matrix is not symmetric".into()));
    }
    let eig = m.symmetric_eigenvalues();
    if eig.iter().any(|&v| v < -1e-10 * scale) {
        return Err(Error::Domain("matrix is not positive semidefinite".into()));
    }
    Ok(rank_from_singular(eig.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AffineRow, BoxBounds, Generator, Sampler, StageSpec};

    fn lower_bound_program(eps: f64) -> ScenarioProgram {
        ScenarioProgram {
            dimension: 1,
            cost: vec![1.0],
            bounds: BoxBounds { lower: vec![-10.0], upper: vec![10.0] },
            deterministic_rows: vec![],
            stages: vec![StageSpec {
                eps,
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

    #[test]
    fn box_only_program() {
        let p = ScenarioProgram {
            dimension: 2,
            cost: vec![1.0, 0.0],
            bounds: BoxBounds { lower: vec![-1.0; 2], upper: vec![1.0; 2] },
            deterministic_rows: vec![],
            stages: vec![],
        };
        let ms = MultiSample::from_outcomes(vec![]);
        let s = solve(&p, &ms).unwrap();
        assert_eq!(s.x, vec![-1.0, -1.0]);
        assert!(support_set(&p, &ms, &s).unwrap().is_empty());
        let e = essential_sets_bruteforce(&p, &ms).unwrap();
        assert_eq!(e.minimal, vec![Member::Domain]);
    }

    #[test]
    fn one_dimensional_support() {
        let p = lower_bound_program(0.1);
        let ms = MultiSample::scalar(&[0.3, 0.7, 0.5]);
        let s = solve(&p, &ms).unwrap();
        assert!((s.x[0] - 0.7).abs() < 1e-15);
        assert_eq!(support_set(&p, &ms, &s).unwrap(), vec![vec![1]]);
        assert_eq!(s.duals.samples[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn lemma_on_violating_extra_sample() {
        let p = lower_bound_program(0.1);
        let ms = MultiSample::scalar(&[0.3, 0.5]);
        assert!(sampling_lemma_check(&p, &ms, &[0.9], 0).unwrap());
        assert!(sampling_lemma_check(&p, &ms, &[0.1], 0).unwrap());
    }

    #[test]
    fn draws_are_reproducible() {
        let p = lower_bound_program(0.1);
        let a = draw_replication(&p, &[50], 9, 3).unwrap();
        let b = draw_replication(&p, &[50], 9, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, draw_replication(&p, &[50], 9, 4).unwrap());
        assert!(a.outcomes[0].iter().all(|d| (0.0..1.0).contains(&d[0])));
    }

    #[test]
    fn subset_enumeration_counts() {
        let mut count = 0;
        for_each_subset(5, 2, |_| {
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 1 + 5 + 10);
        let mut seen = Vec::new();
        for_each_subset(3, 3, |s| {
            seen.push(s.to_vec());
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 8);
        assert_eq!(seen.last().unwrap(), &vec![0, 1, 2]);
    }

    #[test]
    fn rank_rules() {
        assert_eq!(support_rank_linear(&[vec![1.0, 2.0, 0.0]]), 1);
        assert_eq!(support_rank_linear(&[vec![1.0, 0.0], vec![2.0, 0.0]]), 1);
        assert_eq!(support_rank_linear(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]), 3);
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(support_rank_quadratic(&id).unwrap(), 3);
        let q = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]];
        assert_eq!(support_rank_quadratic(&q).unwrap(), 2);
        assert_eq!(support_rank_quadratic(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap(), 0);
        assert!(support_rank_quadratic(&[vec![1.0, 0.0], vec![0.0, -1.0]]).is_err());
        assert!(support_rank_quadratic(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
    }
}
