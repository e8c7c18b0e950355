//! Binomial and beta-function primitives evaluated in log space.
//!
//! Every bound in the crate reduces to tails of the binomial distribution
//! `Φ(x; K, ε) = Σ_{j≤x} C(K,j) ε^j (1-ε)^{K-j}` and, through the beta
//! identity, to the regularized incomplete beta function. Sample sizes in
//! the 10^5 range make naive products underflow, so each pmf term is
//! computed with Loader's saddle-point expansion and the tail is summed
//! with a log-sum-exp anchored at its largest term.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Natural logarithm of a probability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    /// Wraps a log-probability. Values a hair above zero (rounding) are
    /// clamped; anything larger or NaN is rejected.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value > 1e-12 {
            return domain(format!("log-probability {value} is not <= 0"));
        }
        Ok(LogProb(value.min(0.0)))
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return domain(format!("probability {p} outside [0, 1]"));
        }
        Ok(LogProb(p.ln()))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    /// Multiplies by `exp(ln_factor)`, capped at one.
    pub fn saturating_mul_scalar(self, ln_factor: f64) -> LogProb {
        LogProb((self.0 + ln_factor).min(0.0))
    }
}

// ln(n!) - (n + 1/2) ln n + n - ln sqrt(2π) for n = 0..=15.
const STIRLING_ERROR_TABLE: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_094,
    0.027_677_925_684_998_339_149,
    0.020_790_672_103_765_093_112,
    0.016_644_691_189_821_192_163,
    0.013_876_128_823_070_747_999,
    0.011_896_709_945_891_770_095,
    0.010_411_265_261_972_096_497,
    0.009_255_462_182_712_732_917_7,
    0.008_330_563_433_362_871_256_5,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_865_7,
    0.006_408_994_188_004_207_068_4,
    0.005_951_370_112_758_847_735_6,
    0.005_554_733_551_962_801_371,
];

/// Stirling-series remainder `ln n! - ((n+½)ln n - n + ½ln 2π)` for integer n.
fn stirling_error(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < 16 {
        return STIRLING_ERROR_TABLE[n as usize];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, accurate when x ≈ np.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * (x / np).ln() + np - x
}

/// Log of the binomial pmf `C(n,k) p^k (1-p)^{n-k}` with relative accuracy
/// independent of `n`.
pub fn ln_binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if k == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 {
            -deviance(nf, nf * q) - nf * p
        } else {
            nf * (-p).ln_1p()
        };
    }
    if k == n {
        return if q < 0.1 {
            -deviance(nf, nf * p) - nf * q
        } else {
            nf * p.ln()
        };
    }
    let kf = k as f64;
    let rest = (n - k) as f64;
    let lc = stirling_error(n) - stirling_error(k) - stirling_error(n - k)
        - deviance(kf, nf * p)
        - deviance(rest, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln C(n, k)`.
pub fn log_binomial_coefficient(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return domain(format!("binomial coefficient C({n}, {k}) with k > n"));
    }
    let k = k.min(n - k);
    if k == 0 {
        return Ok(0.0);
    }
    if n <= 120 {
        // C(120, 60) < 2^128, and every partial product C(n-k+i, i) fits too.
        let mut c: u128 = 1;
        for i in 1..=k as u128 {
            c = c * (n as u128 - k as u128 + i) / i;
        }
        return Ok((c as f64).ln());
    }
    let nf = n as f64;
    let kf = k as f64;
    let frac = kf / nf;
    let entropy = kf * (nf / kf).ln() - (nf - kf) * (-frac).ln_1p();
    let lc = stirling_error(n) - stirling_error(k) - stirling_error(n - k);
    Ok(entropy + lc - 0.5 * (LN_2PI + kf.ln() + (-frac).ln_1p()))
}

fn check_level(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("level {eps} outside (0, 1)"));
    }
    Ok(())
}

/// `ln Φ(x; K, ε)`; stays finite where `Φ` itself underflows.
pub fn ln_binomial_cdf(x: i64, trials: u64, eps: f64) -> Result<LogProb> {
    check_level(eps)?;
    if x < 0 {
        return Ok(LogProb::ZERO);
    }
    let x = x as u64;
    if x >= trials {
        return Ok(LogProb::ONE);
    }
    // pmf is unimodal; the largest retained term sits at min(x, mode).
    let mode = (((trials + 1) as f64) * eps).floor() as u64;
    let top = x.min(mode.min(trials));
    let anchor = ln_binomial_pmf(top, trials, eps);
    if anchor == f64::NEG_INFINITY {
        return Ok(LogProb::ZERO);
    }
    let mut sum = 0.0;
    let mut j = top as i64;
    while j >= 0 {
        let term = (ln_binomial_pmf(j as u64, trials, eps) - anchor).exp();
        sum += term;
        // Terms left of the mode decrease monotonically.
        if term < 1e-22 * sum {
            break;
        }
        j -= 1;
    }
    if top < x {
        let mut j = top + 1;
        while j <= x {
            let term = (ln_binomial_pmf(j, trials, eps) - anchor).exp();
            sum += term;
            j += 1;
        }
    }
    LogProb::new(anchor + sum.ln())
}

/// Binomial distribution function `Φ(x; K, ε)`: probability of at most `x`
/// successes in `K` Bernoulli(ε) trials.
pub fn binomial_cdf(x: i64, trials: u64, eps: f64) -> Result<f64> {
    Ok(ln_binomial_cdf(x, trials, eps)?.prob())
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * LN_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta `I_ε(a, b) = B(ε; a, b) / B(a, b)`.
pub fn regularized_incomplete_beta(eps: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain(format!("beta parameters a={a}, b={b} must be positive"));
    }
    if !(0.0..=1.0).contains(&eps) {
        return domain(format!("argument {eps} outside [0, 1]"));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    if eps == 1.0 {
        return Ok(1.0);
    }
    if eps > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_fraction(1.0 - eps, b, a)?)
    } else {
        beta_fraction(eps, a, b)
    }
}

/// Lentz evaluation of the incomplete-beta continued fraction; converges
/// fast for x < (a+1)/(a+b+2).
fn beta_fraction(x: f64, a: f64, b: f64) -> Result<f64> {
    const MAX_ITER: usize = 20_000;
    const TINY: f64 = 1e-300;
    let ln_prefix = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let prefix = ln_prefix.exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut f = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        f *= d * c;

        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok((prefix * f).clamp(0.0, 1.0));
        }
    }
    Err(Error::Numerical(format!(
        "incomplete beta continued fraction did not converge for x={x}, a={a}, b={b}"
    )))
}

/// Inverse of `I_x(a, b)` in `x`, by bisection to machine resolution.
pub fn inverse_regularized_incomplete_beta(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("probability {p} outside [0, 1]"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if regularized_incomplete_beta(mid, a, b)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
