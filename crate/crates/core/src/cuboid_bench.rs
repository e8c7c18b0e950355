//! Minimal-diameter cuboid experiment.
//!
//! An n-dimensional box with centre `z` and widths `w` must contain an
//! uncertain point δ ∈ ℝⁿ; the objective is the diagonal `W = ‖w‖₂`. In the
//! multi-stage form every coordinate is its own chance constraint with
//! support rank 2; in the single-stage form all coordinates form one joint
//! constraint of rank `2n+1`. Both are solved in closed form: per coordinate
//! the optimal interval is the hull of that coordinate's samples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::implicit_sample_size;
use crate::error::{Error, Result};
use crate::model::{BoxBounds, Generator, LinearRow, MultiSample, Sampler, ScenarioProgram, StageSpec};
use crate::rng::{stage_chunk, stream, Purpose};
use crate::scenario_core::{Duals, Solution, SolveStatus};

pub const TABLE_EPS: [f64; 4] = [0.01, 0.05, 0.10, 0.25];
pub const TABLE_N: [usize; 7] = [2, 3, 5, 10, 50, 100, 500];

/// Bound on |z| in the linear-program form of the cuboid problem.
const CENTRE_BOUND: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CuboidMode {
    MultiStage,
    SingleStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidInstance {
    pub n: usize,
    pub eps: Vec<f64>,
    pub theta_total: f64,
    pub mode: CuboidMode,
}

impl CuboidInstance {
    pub fn dimension(&self) -> usize {
        2 * self.n + 1
    }

    /// Linear-program form over variables `[z, w, W]` with the surrogate
    /// row `Σ w − W ≤ 0`. Coordinates decouple, so the `(z, w)` part of its
    /// optimizer coincides with that of the Euclidean objective.
    pub fn program(&self) -> ScenarioProgram {
        let n = self.n;
        let d = self.dimension();
        let mut cost = vec![0.0; d];
        cost[d - 1] = 1.0;
        let mut lower = vec![-CENTRE_BOUND; n];
        lower.extend(vec![0.0; n + 1]);
        let mut upper = vec![CENTRE_BOUND; n];
        upper.extend(vec![2.0 * CENTRE_BOUND; n]);
        upper.push(2.0 * CENTRE_BOUND * n as f64);
        let mut sum_row = vec![0.0; n];
        sum_row.extend(vec![1.0; n]);
        sum_row.push(-1.0);
        let stage = |eps: f64, coordinate: Option<usize>, zeta: usize, m: usize| StageSpec {
            eps,
            zeta_bar: Some(zeta),
            monotone: false,
            discard: 0,
            generator: Generator::Cuboid { coordinate },
            sampler: Some(Sampler::Normal { mean: vec![0.0; m], std: vec![1.0; m] }),
        };
        let stages = match self.mode {
            CuboidMode::MultiStage => (0..n).map(|c| stage(self.eps[c], Some(c), 2, 1)).collect(),
            CuboidMode::SingleStage => {
                let eps = self.eps.iter().copied().fold(f64::INFINITY, f64::min);
                vec![stage(eps, None, d, n)]
            }
        };
        ScenarioProgram {
            dimension: d,
            cost,
            bounds: BoxBounds { lower, upper },
            deterministic_rows: vec![LinearRow { a: sum_row, b: 0.0 }],
            stages,
        }
    }
}

/// Smallest interval containing `values`; indices of the first minimum and
/// first maximum.
fn hull(values: impl Iterator<Item = f64>) -> Option<(f64, f64, usize, usize)> {
    let mut out: Option<(f64, f64, usize, usize)> = None;
    for (k, v) in values.enumerate() {
        out = Some(match out {
            None => (v, v, k, k),
            Some((lo, hi, il, ih)) => {
                let (lo, il) = if v < lo { (v, k) } else { (lo, il) };
                let (hi, ih) = if v > hi { (v, k) } else { (hi, ih) };
                (lo, hi, il, ih)
            }
        });
    }
    out
}

/// Closed-form optimizer `[z, w, W]`: per coordinate the centre and width
/// of the sample hull, and `W = ‖w‖₂`.
pub fn cuboid_solve_analytic(instance: &CuboidInstance, sample: &MultiSample) -> Result<Solution> {
    let n = instance.n;
    let d = instance.dimension();
    let mut x = vec![0.0; d];
    let stages = sample.outcomes.len();
    let mut active = vec![Vec::new(); stages];
    for c in 0..n {
        let (stage, column): (usize, Box<dyn Iterator<Item = f64>>) = match instance.mode {
            CuboidMode::MultiStage => (c, Box::new(sample.outcomes.get(c).into_iter().flatten().map(|o| o[0]))),
            CuboidMode::SingleStage => (0, Box::new(sample.outcomes.first().into_iter().flatten().map(move |o| o[c]))),
        };
        let (lo, hi, il, ih) =
            hull(column).ok_or_else(|| Error::Precondition(format!("no samples for coordinate {c}")))?;
        x[c] = 0.5 * (lo + hi);
        x[n + c] = hi - lo;
        active[stage].extend([il, ih]);
    }
    for a in &mut active {
        a.sort_unstable();
        a.dedup();
    }
    let big_w = x[n..2 * n].iter().map(|w| w * w).sum::<f64>().sqrt();
    x[d - 1] = big_w;
    Ok(Solution {
        status: SolveStatus::Optimal,
        x,
        objective: big_w,
        active,
        duals: Duals {
            samples: sample.outcomes.iter().map(|s| vec![0.0; s.len()]).collect(),
            lower: vec![0.0; d],
            upper: vec![0.0; d],
            deterministic: vec![0.0],
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub theta_total: f64,
    pub eps: Vec<f64>,
    pub n: Vec<usize>,
    /// `multi[e][j]`: per-stage size with ζ̄ = 2 and θ/n per stage.
    pub multi: Vec<Vec<u64>>,
    /// `single[e][j]`: size with ζ̄ = 2n+1 and the full θ.
    pub single: Vec<Vec<u64>>,
}

fn percent_label(eps: f64) -> String {
    format!("{}%", (eps * 100.0 * 1e6).round() / 1e6)
}

fn grid_csv<T: std::fmt::Display>(eps: &[f64], n: &[usize], cells: &[Vec<T>]) -> String {
    let mut out = String::from("eps");
    for nn in n {
        out.push_str(&format!(",n={nn}"));
    }
    out.push('\n');
    for (e, row) in eps.iter().zip(cells) {
        out.push_str(&percent_label(*e));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

impl Table1 {
    pub fn multi_csv(&self) -> String {
        grid_csv(&self.eps, &self.n, &self.multi)
    }

    pub fn single_csv(&self) -> String {
        grid_csv(&self.eps, &self.n, &self.single)
    }
}

pub fn run_table1_grid(theta_total: f64, eps: &[f64], n: &[usize]) -> Result<Table1> {
    let cell = |f: &dyn Fn(f64, usize) -> Result<u64>| -> Result<Vec<Vec<u64>>> {
        eps.iter().map(|&e| n.iter().map(|&nn| f(e, nn)).collect()).collect()
    };
    Ok(Table1 {
        theta_total,
        eps: eps.to_vec(),
        n: n.to_vec(),
        multi: cell(&|e, nn| implicit_sample_size(2, e, theta_total / nn as f64))?,
        single: cell(&|e, nn| implicit_sample_size(2 * nn as u64 + 1, e, theta_total))?,
    })
}

pub fn run_table1(theta_total: f64) -> Result<Table1> {
    run_table1_grid(theta_total, &TABLE_EPS, &TABLE_N)
}

/// Whether the two modes of a Table 2 replication share random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Each multi-stage coordinate reuses the first `K_multi` values of the
    /// same coordinate of the single-stage draw.
    #[default]
    Shared,
    Independent,
}

/// How a coordinate's sample extremes are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtremeSampler {
    /// Draw the minimum and maximum of K standard normals directly from
    /// uniform order statistics; same law as drawing all K values.
    #[default]
    OrderStatistics,
    /// Draw all K values.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Options {
    pub replications: u64,
    pub seed: u64,
    pub pairing: Pairing,
    pub sampler: ExtremeSampler,
    pub theta_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub eps: f64,
    pub n: usize,
    pub k_multi: u64,
    pub k_single: u64,
    /// Mean relative surplus `(W_single − W_multi)/W_multi`, in percent.
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2 {
    pub eps: Vec<f64>,
    pub n: Vec<usize>,
    pub replications: u64,
    pub cells: Vec<Vec<Table2Cell>>,
}

impl Table2 {
    pub fn mean_csv(&self) -> String {
        let means: Vec<Vec<String>> =
            self.cells.iter().map(|r| r.iter().map(|c| format!("{:.2}", c.mean)).collect()).collect();
        grid_csv(&self.eps, &self.n, &means)
    }

    pub fn std_err_csv(&self) -> String {
        let se: Vec<Vec<String>> =
            self.cells.iter().map(|r| r.iter().map(|c| format!("{:.3}", c.std_err)).collect()).collect();
        grid_csv(&self.eps, &self.n, &se)
    }

    /// One row per cell with mean and standard error side by side.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("eps,n,k_multi,k_single,mean_percent,std_err_percent\n");
        for c in self.cells.iter().flatten() {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4}\n",
                percent_label(c.eps),
                c.n,
                c.k_multi,
                c.k_single,
                c.mean,
                c.std_err
            ));
        }
        out
    }
}

/// Minimum and maximum of `k ≥ 1` standard normal draws.
fn normal_extremes<R: Rng + ?Sized>(rng: &mut R, k: u64, how: ExtremeSampler, unit: &Normal) -> (f64, f64) {
    match how {
        ExtremeSampler::Direct => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for _ in 0..k {
                let v: f64 = StandardNormal.sample(rng);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        }
        ExtremeSampler::OrderStatistics => {
            // Smallest of k uniforms: 1 − V^{1/k}.
            let v: f64 = 1.0 - rng.random::<f64>();
            let p = -(v.ln() / k as f64).exp_m1();
            let lo = unit.inverse_cdf(p);
            if k == 1 {
                return (lo, lo);
            }
            // The other k−1 are uniform on (p, 1); the upper gap of their
            // maximum is (1 − p)·(1 − W^{1/(k−1)}).
            let w: f64 = 1.0 - rng.random::<f64>();
            let q = (1.0 - p) * -(w.ln() / (k - 1) as f64).exp_m1();
            (lo, -unit.inverse_cdf(q))
        }
    }
}

fn merge(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.min(b.0), a.1.max(b.1))
}

/// Relative surplus of one replication of cell `(k_multi, k_single, n)`.
fn surplus_replication(cell: u64, rep: u64, n: usize, k_multi: u64, k_single: u64, opts: &Table2Options) -> f64 {
    let unit = Normal::standard();
    let mut multi_sq = 0.0;
    let mut single_sq = 0.0;
    for c in 0..n {
        let id = stage_chunk(c, cell);
        let mut rng = stream(opts.seed, Purpose::Cuboid, rep, id);
        let (wm, ws) = match opts.pairing {
            Pairing::Shared => {
                let first = normal_extremes(&mut rng, k_multi, opts.sampler, &unit);
                let all = if k_single > k_multi {
                    merge(first, normal_extremes(&mut rng, k_single - k_multi, opts.sampler, &unit))
                } else {
                    first
                };
                (first.1 - first.0, all.1 - all.0)
            }
            Pairing::Independent => {
                let m = normal_extremes(&mut rng, k_multi, opts.sampler, &unit);
                let mut other = stream(opts.seed, Purpose::CuboidIndependent, rep, id);
                let s = normal_extremes(&mut other, k_single, opts.sampler, &unit);
                (m.1 - m.0, s.1 - s.0)
            }
        };
        multi_sq += wm * wm;
        single_sq += ws * ws;
    }
    let (wm, ws) = (multi_sq.sqrt(), single_sq.sqrt());
    (ws - wm) / wm
}

pub fn run_table2(n_list: &[usize], eps_list: &[f64], opts: &Table2Options) -> Result<Table2> {
    if opts.replications == 0 {
        return Err(Error::Precondition("at least one replication required".into()));
    }
    let sizes = run_table1_grid(opts.theta_total, eps_list, n_list)?;
    let mut cells = Vec::with_capacity(eps_list.len());
    for (ei, &eps) in eps_list.iter().enumerate() {
        let mut row = Vec::with_capacity(n_list.len());
        for (ni, &n) in n_list.iter().enumerate() {
            let (k_multi, k_single) = (sizes.multi[ei][ni], sizes.single[ei][ni]);
            let cell_id = (ei * n_list.len() + ni) as u64;
            let values: Vec<f64> = (0..opts.replications)
                .into_par_iter()
                .map(|rep| surplus_replication(cell_id, rep, n, k_multi, k_single, opts))
                .collect();
            let reps = values.len() as f64;
            let mean = values.iter().sum::<f64>() / reps;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1.0)
            } else {
                0.0
            };
            row.push(Table2Cell {
                eps,
                n,
                k_multi,
                k_single,
                mean: 100.0 * mean,
                std_err: 100.0 * (var / reps).sqrt(),
            });
        }
        cells.push(row);
    }
    Ok(Table2 { eps: eps_list.to_vec(), n: n_list.to_vec(), replications: opts.replications, cells })
}
