//! Sample sizes and discard counts from support-rank bounds.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::ScenarioProgram;
use crate::probkernel::{ln_binomial_cdf, log_binomial_coefficient, LogProb};

/// Relative guard applied before rounding closed-form bounds.
const ROUNDING_GUARD: f64 = 1e-9;

fn guarded_ceil(v: f64) -> u64 {
    (v - ROUNDING_GUARD * v.abs()).ceil().max(0.0) as u64
}

fn guarded_floor(v: f64) -> f64 {
    (v + ROUNDING_GUARD * v.abs()).floor()
}

fn check(zeta_bar: u64, eps: f64, theta: f64) -> Result<()> {
    if zeta_bar == 0 {
        return domain("support rank must be at least 1");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("eps {eps} outside (0, 1)"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return domain(format!("theta {theta} outside (0, 1)"));
    }
    Ok(())
}

/// Splits a total confidence budget across `n` stages, evenly or by weight.
pub fn split_confidence(theta_total: f64, n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if !(theta_total > 0.0 && theta_total < 1.0) {
        return domain(format!("theta {theta_total} outside (0, 1)"));
    }
    if n == 0 {
        return domain("at least one stage required");
    }
    match weights {
        None => Ok(vec![theta_total / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return domain(format!("{} weights for {n} stages", w.len()));
            }
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return domain("weights must be positive");
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return domain(format!("weights sum to {sum}, not 1"));
            }
            Ok(w.iter().map(|v| theta_total * v).collect())
        }
    }
}

/// Smallest `K ≥ lo` with `pred(K)`, for a predicate that is monotone in K.
fn smallest_satisfying(lo: u64, mut pred: impl FnMut(u64) -> Result<bool>) -> Result<u64> {
    if pred(lo)? {
        return Ok(lo);
    }
    let mut below = lo;
    let mut step = lo.max(1);
    let mut above = loop {
        let k = below.checked_add(step).ok_or_else(|| Error::Numerical("sample size overflow".into()))?;
        if pred(k)? {
            break k;
        }
        below = k;
        step *= 2;
    };
    while above - below > 1 {
        let mid = below + (above - below) / 2;
        if pred(mid)? {
            above = mid;
        } else {
            below = mid;
        }
    }
    Ok(above)
}

/// Smallest `K ≥ ζ̄` with `Φ(ζ̄−1; K, ε) ≤ θ`.
pub fn implicit_sample_size(zeta_bar: u64, eps: f64, theta: f64) -> Result<u64> {
    check(zeta_bar, eps, theta)?;
    let ln_theta = theta.ln();
    smallest_satisfying(zeta_bar, |k| {
        Ok(ln_binomial_cdf(zeta_bar as i64 - 1, k, eps)?.ln() <= ln_theta)
    })
}

/// `⌈(2/ε)(ln(1/θ) + ζ̄ − 1)⌉`.
pub fn chernoff_sample_size(zeta_bar: u64, eps: f64, theta: f64) -> Result<u64> {
    check(zeta_bar, eps, theta)?;
    Ok(guarded_ceil(2.0 / eps * (-theta.ln() + (zeta_bar - 1) as f64)))
}

/// `⌈(1/ε)(ln(1/θ) + √(2(ζ̄−1)ln(1/θ)) + ζ̄ − 1)⌉`.
pub fn refined_sample_size(zeta_bar: u64, eps: f64, theta: f64) -> Result<u64> {
    check(zeta_bar, eps, theta)?;
    let l = -theta.ln();
    let z = (zeta_bar - 1) as f64;
    Ok(guarded_ceil((l + (2.0 * z * l).sqrt() + z) / eps))
}

/// `C(R+ζ̄−1, R) · Φ(R+ζ̄−1; K, ε)`, capped at one, in log space.
pub fn ln_discard_posterior_confidence(zeta_bar: u64, k: u64, r: u64, eps: f64) -> Result<LogProb> {
    if zeta_bar == 0 {
        return domain("support rank must be at least 1");
    }
    if k < r + zeta_bar {
        return Err(Error::Precondition(format!("K = {k} < R + zeta = {}", r + zeta_bar)));
    }
    let top = r + zeta_bar - 1;
    let lc = log_binomial_coefficient(top, r)?;
    Ok(ln_binomial_cdf(top as i64, k, eps)?.saturating_mul_scalar(lc))
}

pub fn discard_posterior_confidence(zeta_bar: u64, k: u64, r: u64, eps: f64) -> Result<f64> {
    Ok(ln_discard_posterior_confidence(zeta_bar, k, r, eps)?.prob())
}

/// Smallest `K ≥ R + ζ̄` meeting the discarding bound at confidence θ.
pub fn implicit_sample_size_with_discarding(zeta_bar: u64, eps: f64, theta: f64, r: u64) -> Result<u64> {
    check(zeta_bar, eps, theta)?;
    let ln_theta = theta.ln();
    smallest_satisfying(r + zeta_bar, |k| {
        Ok(ln_discard_posterior_confidence(zeta_bar, k, r, eps)?.ln() <= ln_theta)
    })
}

/// `⌈(2/ε)ln(1/θ) + (4/ε)(R + ζ̄ − 1)⌉`.
pub fn explicit_sample_size_with_discarding(zeta_bar: u64, eps: f64, theta: f64, r: u64) -> Result<u64> {
    check(zeta_bar, eps, theta)?;
    Ok(guarded_ceil(2.0 / eps * -theta.ln() + 4.0 / eps * (r + zeta_bar - 1) as f64))
}

/// `⌊εK − ζ̄ + 1 − √(2εK·ln((εK)^{ζ̄−1}/θ))⌋`, clamped to `[0, K − ζ̄]`.
pub fn max_discardable(zeta_bar: u64, k: u64, eps: f64, theta: f64) -> Result<u64> {
    check(zeta_bar, eps, theta)?;
    if k < zeta_bar {
        return Ok(0);
    }
    let ek = eps * k as f64;
    let log_term = (zeta_bar - 1) as f64 * ek.ln() - theta.ln();
    if log_term < 0.0 {
        return Ok(0);
    }
    let v = guarded_floor(ek - zeta_bar as f64 + 1.0 - (2.0 * ek * log_term).sqrt());
    Ok((v.max(0.0) as u64).min(k - zeta_bar))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Implicit,
    Chernoff,
    Refined,
    ImplicitDiscard,
    ExplicitDiscard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    #[default]
    Implicit,
    Chernoff,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: usize,
    pub k: u64,
    pub r: u64,
    pub eps: f64,
    pub theta: f64,
    pub zeta_bar: u64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizePlan {
    pub theta_total: f64,
    pub stages: Vec<StagePlan>,
}

impl SampleSizePlan {
    pub fn sizes(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.k as usize).collect()
    }

    /// Plan with caller-chosen sizes (for experiments that fix K directly).
    pub fn fixed(program: &ScenarioProgram, sizes: &[u64], theta_total: f64) -> Self {
        let n = program.stages.len().max(1) as f64;
        SampleSizePlan {
            theta_total,
            stages: program
                .stages
                .iter()
                .zip(sizes)
                .enumerate()
                .map(|(i, (s, &k))| StagePlan {
                    stage: i,
                    k,
                    r: s.discard as u64,
                    eps: s.eps,
                    theta: theta_total / n,
                    zeta_bar: program.zeta_bar(i) as u64,
                    method: Method::Implicit,
                })
                .collect(),
        }
    }
}

/// Per-stage sample sizes for an even (or weighted) confidence split.
/// Discard counts come from `discards`, or from each stage's declaration.
pub fn plan_multistage(
    program: &ScenarioProgram,
    theta_total: f64,
    policy: Policy,
    discards: Option<&[u64]>,
    weights: Option<&[f64]>,
) -> Result<SampleSizePlan> {
    program.validate()?;
    let n = program.stages.len();
    if n == 0 {
        return Ok(SampleSizePlan { theta_total, stages: vec![] });
    }
    if let Some(r) = discards {
        if r.len() != n {
            return domain(format!("{} discard counts for {n} stages", r.len()));
        }
    }
    let thetas = split_confidence(theta_total, n, weights)?;
    let mut stages = Vec::with_capacity(n);
    for (i, stage) in program.stages.iter().enumerate() {
        let zeta = program.zeta_bar(i) as u64;
        let r = discards.map_or(stage.discard as u64, |d| d[i]);
        let (eps, theta) = (stage.eps, thetas[i]);
        let (k, method) = match (policy, r) {
            (Policy::Implicit, 0) => (implicit_sample_size(zeta, eps, theta)?, Method::Implicit),
            (Policy::Chernoff, 0) => (chernoff_sample_size(zeta, eps, theta)?, Method::Chernoff),
            (Policy::Refined, 0) => (refined_sample_size(zeta, eps, theta)?, Method::Refined),
            (Policy::Implicit, _) => (
                implicit_sample_size_with_discarding(zeta, eps, theta, r)?,
                Method::ImplicitDiscard,
            ),
            _ => (
                explicit_sample_size_with_discarding(zeta, eps, theta, r)?,
                Method::ExplicitDiscard,
            ),
        };
        stages.push(StagePlan {
            stage: i,
            k: k.max(r + zeta + 1),
            r,
            eps,
            theta,
            zeta_bar: zeta,
            method,
        });
    }
    Ok(SampleSizePlan { theta_total, stages })
}
