//! Problem description: programs, stages, samplers and sampled outcomes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear inequality `a·x ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Linear program over a bounded box with chance-constrained stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProgram {
    pub dimension: usize,
    pub cost: Vec<f64>,
    #[serde(rename = "box")]
    pub bounds: BoxBounds,
    #[serde(default)]
    pub deterministic_rows: Vec<LinearRow>,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
}

/// Row whose coefficients depend affinely on the outcome δ:
/// `(a + Σ_j δ_j a_delta[j])·x ≤ b + Σ_j δ_j b_delta[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub a: Vec<f64>,
    #[serde(default)]
    pub a_delta: Vec<Vec<f64>>,
    pub b: f64,
    #[serde(default)]
    pub b_delta: Vec<f64>,
}

/// Maps an outcome δ to the rows it imposes. All rows generated by one
/// outcome form a single joint constraint (their pointwise maximum).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Generator {
    Linear { rows: Vec<AffineRow> },
    /// Containment of δ in the axis-aligned box with centre `z` and widths
    /// `w`, over variables ordered `[z_0..z_n, w_0..w_n, W]`. With a
    /// coordinate the stage constrains that axis only; without one, every
    /// axis jointly.
    Cuboid {
        #[serde(default)]
        coordinate: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalarDist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
    Choice { values: Vec<f64> },
}

impl ScalarDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScalarDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ScalarDist::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            ScalarDist::Choice { values } => values[rng.random_range(0..values.len())],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ScalarDist::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            ScalarDist::Normal { mean, std } => mean.is_finite() && std.is_finite() && *std >= 0.0,
            ScalarDist::Choice { values } => !values.is_empty() && values.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid scalar distribution {self:?}")))
        }
    }
}

/// Distribution of the outcome vector δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Sampler {
    Uniform { low: Vec<f64>, high: Vec<f64> },
    Normal { mean: Vec<f64>, std: Vec<f64> },
    Product { components: Vec<ScalarDist> },
}

impl Sampler {
    fn components(&self) -> Result<Vec<ScalarDist>> {
        let zip = |u: &[f64], v: &[f64], f: fn(f64, f64) -> ScalarDist| {
            if u.len() != v.len() {
                return Err(Error::Config("sampler parameter lengths differ".into()));
            }
            Ok(u.iter().zip(v).map(|(&p, &q)| f(p, q)).collect())
        };
        match self {
            Sampler::Uniform { low, high } => zip(low, high, |low, high| ScalarDist::Uniform { low, high }),
            Sampler::Normal { mean, std } => zip(mean, std, |mean, std| ScalarDist::Normal { mean, std }),
            Sampler::Product { components } => Ok(components.clone()),
        }
    }

    pub fn outcome_dimension(&self) -> usize {
        match self {
            Sampler::Uniform { low, .. } => low.len(),
            Sampler::Normal { mean, .. } => mean.len(),
            Sampler::Product { components } => components.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let comps = self.components()?;
        if comps.is_empty() {
            return Err(Error::Config("sampler has no components".into()));
        }
        comps.iter().try_for_each(ScalarDist::validate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Sampler::Uniform { low, high } => low
                .iter()
                .zip(high)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            Sampler::Normal { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
            Sampler::Product { components } => components.iter().map(|c| c.sample(rng)).collect(),
        }
    }

    /// Marginal distribution of one component.
    pub fn component(&self, j: usize) -> Option<ScalarDist> {
        self.components().ok()?.get(j).cloned()
    }
}

/// One chance constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_bar: Option<usize>,
    #[serde(default)]
    pub monotone: bool,
    /// Number of samples to discard after solving.
    #[serde(default)]
    pub discard: usize,
    pub generator: Generator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<Sampler>,
}

impl StageSpec {
    /// Rows imposed by outcome `delta` in a `d`-dimensional program.
    pub fn rows(&self, d: usize, delta: &[f64]) -> Vec<LinearRow> {
        match &self.generator {
            Generator::Linear { rows } => rows
                .iter()
                .map(|r| {
                    let mut a = r.a.clone();
                    for (dj, ad) in delta.iter().zip(&r.a_delta) {
                        for (ak, adk) in a.iter_mut().zip(ad) {
                            *ak += dj * adk;
                        }
                    }
                    let b = r.b + r.b_delta.iter().zip(delta).map(|(u, v)| u * v).sum::<f64>();
                    LinearRow { a, b }
                })
                .collect(),
            Generator::Cuboid { coordinate } => {
                let n = (d - 1) / 2;
                let coords: Vec<usize> = match coordinate {
                    Some(c) => vec![*c],
                    None => (0..n).collect(),
                };
                let mut out = Vec::with_capacity(2 * coords.len());
                for c in coords {
                    let v = if delta.len() == 1 { delta[0] } else { delta[c] };
                    // z - w/2 <= δ  and  -z - w/2 <= -δ
                    let mut lo = vec![0.0; d];
                    lo[c] = 1.0;
                    lo[n + c] = -0.5;
                    let mut hi = vec![0.0; d];
                    hi[c] = -1.0;
                    hi[n + c] = -0.5;
                    out.push(LinearRow { a: lo, b: v });
                    out.push(LinearRow { a: hi, b: -v });
                }
                out
            }
        }
    }

    /// `f(x, δ) = max_rows (a·x − b)`; positive means violated.
    pub fn constraint_value(&self, d: usize, x: &[f64], delta: &[f64]) -> f64 {
        self.rows(d, delta)
            .iter()
            .map(|r| dot(&r.a, x) - r.b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Directions the stage can ever constrain, as a list of vectors
    /// spanning the same space as every possible row.
    pub fn structural_rows(&self, d: usize) -> Vec<Vec<f64>> {
        match &self.generator {
            Generator::Linear { rows } => rows
                .iter()
                .flat_map(|r| std::iter::once(r.a.clone()).chain(r.a_delta.iter().cloned()))
                .collect(),
            Generator::Cuboid { .. } => {
                self.rows(d, &[0.0; 1]).into_iter().map(|r| r.a).collect()
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

impl ScenarioProgram {
    /// Checks structural invariants: finite box, consistent lengths,
    /// levels in (0, 1).
    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        let bad = |msg: String| Err(Error::Config(msg));
        if d == 0 {
            return bad("dimension must be at least 1".into());
        }
        if self.cost.len() != d {
            return bad(format!("cost has length {}, expected {d}", self.cost.len()));
        }
        if self.bounds.lower.len() != d || self.bounds.upper.len() != d {
            return bad("box bounds must have one entry per variable".into());
        }
        for (k, (l, u)) in self.bounds.lower.iter().zip(&self.bounds.upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return bad(format!("box bound {k} is [{l}, {u}]; finite l <= u required"));
            }
        }
        for (j, r) in self.deterministic_rows.iter().enumerate() {
            if r.a.len() != d || !r.b.is_finite() {
                return bad(format!("deterministic row {j} malformed"));
            }
        }
        for (i, s) in self.stages.iter().enumerate() {
            if !(s.eps > 0.0 && s.eps < 1.0) {
                return bad(format!("stage {i}: eps {} outside (0, 1)", s.eps));
            }
            if let Some(z) = s.zeta_bar {
                if z < 1 || z > d {
                    return bad(format!("stage {i}: zeta_bar {z} outside [1, {d}]"));
                }
            }
            match &s.generator {
                Generator::Linear { rows } => {
                    if rows.is_empty() {
                        return bad(format!("stage {i}: linear generator without rows"));
                    }
                    let m = s.sampler.as_ref().map(Sampler::outcome_dimension);
                    for r in rows {
                        if r.a.len() != d || r.a_delta.iter().any(|v| v.len() != d) {
                            return bad(format!("stage {i}: row length differs from dimension"));
                        }
                        if let Some(m) = m {
                            if r.a_delta.len() > m || r.b_delta.len() > m {
                                return bad(format!("stage {i}: row uses more outcome components than the sampler draws"));
                            }
                        }
                    }
                }
                Generator::Cuboid { coordinate } => {
                    if d < 3 || d % 2 == 0 {
                        return bad(format!("stage {i}: cuboid generator needs dimension 2n+1"));
                    }
                    let n = (d - 1) / 2;
                    if coordinate.is_some_and(|c| c >= n) {
                        return bad(format!("stage {i}: cuboid coordinate outside 0..{n}"));
                    }
                }
            }
            if let Some(sp) = &s.sampler {
                sp.validate()?;
            }
        }
        Ok(())
    }

    /// Declared support rank of stage `i`, or the rank of its structural rows.
    pub fn zeta_bar(&self, i: usize) -> usize {
        let stage = &self.stages[i];
        stage.zeta_bar.unwrap_or_else(|| {
            let rows = stage.structural_rows(self.dimension);
            crate::scenario_core::support_rank_linear(&rows).clamp(1, self.dimension)
        })
    }
}

/// Provenance of a multisample's random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub replication: u64,
}

/// Sampled outcomes for every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSample {
    /// `outcomes[i][k]` is the k-th outcome of stage i.
    pub outcomes: Vec<Vec<Vec<f64>>>,
    /// Tie-break values in [0, 1], parallel to `outcomes`.
    pub tie_breaks: Vec<Vec<f64>>,
    /// Tie-break value of the deterministic set.
    pub domain_tie: f64,
    pub provenance: Option<Provenance>,
}

impl MultiSample {
    /// Hand-built sample with tie-break values spread evenly over (0, 1).
    pub fn from_outcomes(outcomes: Vec<Vec<Vec<f64>>>) -> Self {
        let total: usize = outcomes.iter().map(Vec::len).sum();
        let step = 1.0 / (total + 2) as f64;
        let mut next = 0;
        let tie_breaks = outcomes
            .iter()
            .map(|s| {
                s.iter()
                    .map(|_| {
                        next += 1;
                        next as f64 * step
                    })
                    .collect()
            })
            .collect();
        MultiSample {
            outcomes,
            tie_breaks,
            domain_tie: (total + 1) as f64 * step,
            provenance: None,
        }
    }

    /// Scalar outcomes, one stage.
    pub fn scalar(values: &[f64]) -> Self {
        Self::from_outcomes(vec![values.iter().map(|&v| vec![v]).collect()])
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.outcomes.iter().map(Vec::len).collect()
    }
}
