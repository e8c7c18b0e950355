mod common;

use common::{example, lower_bound_family, rng};
use rand_distr::{Binomial, Distribution};
use scenario_opt::validate::exact_violation;
use scenario_opt::{
    clopper_pearson, estimate_violation, violation_survey, SampleSizePlan, SurveyOptions, ViolationMethod,
};
use statrs::distribution::{Binomial as StatBinomial, DiscreteCDF};

#[test]
fn clopper_pearson_tails() {
    for &(k, n) in &[(0u64, 10u64), (1, 1), (3, 50), (17, 200), (200, 200), (999, 100_000)] {
        let alpha = 0.05;
        let (lo, hi) = clopper_pearson(k, n, alpha).unwrap();
        assert!(lo <= k as f64 / n as f64 && k as f64 / n as f64 <= hi);
        if k > 0 {
            let tail = 1.0 - StatBinomial::new(lo, n).unwrap().cdf(k - 1);
            assert!((tail - alpha / 2.0).abs() < 1e-9, "upper tail at {lo}: {tail}");
        } else {
            assert_eq!(lo, 0.0);
        }
        if k < n {
            let tail = StatBinomial::new(hi, n).unwrap().cdf(k);
            assert!((tail - alpha / 2.0).abs() < 1e-9, "lower tail at {hi}: {tail}");
        } else {
            assert_eq!(hi, 1.0);
        }
    }
    let (lo, _) = clopper_pearson(1, 1, 0.05).unwrap();
    assert!((lo - 0.025).abs() < 1e-12);
}

#[test]
fn clopper_pearson_coverage() {
    let mut r = rng(31);
    let (p, n, alpha, trials) = (0.07, 300u64, 0.05, 4000);
    let dist = Binomial::new(n, p).unwrap();
    let covered = (0..trials)
        .filter(|_| {
            let (lo, hi) = clopper_pearson(dist.sample(&mut r), n, alpha).unwrap();
            lo <= p && p <= hi
        })
        .count();
    let rate = covered as f64 / trials as f64;
    let sigma = (alpha * (1.0 - alpha) / trials as f64).sqrt();
    assert!(rate >= 1.0 - alpha - 3.0 * sigma, "coverage {rate}");
}

#[test]
fn monte_carlo_agrees_with_closed_form() {
    let p = lower_bound_family(0.1);
    let stage = &p.stages[0];
    let x = [0.9];
    assert!((exact_violation(&x, stage).unwrap() - 0.1).abs() < 1e-15);
    let est = estimate_violation(&x, stage, 0, 1_000_000, 0.01, 3).unwrap();
    assert!((est.point - 0.1).abs() < 4.0 * (0.09f64 / 1e6).sqrt());
    assert!(est.ci_low < 0.1 && 0.1 < est.ci_high);

    let cuboid = example("cuboid");
    let x = [0.1, -0.2, 3.0, 2.5, 5.5];
    for (i, stage) in cuboid.stages.iter().enumerate() {
        let exact = exact_violation(&x, stage).unwrap();
        let est = estimate_violation(&x, stage, i, 400_000, 0.01, 4).unwrap();
        assert!(est.ci_low <= exact && exact <= est.ci_high, "stage {i}: {exact} vs {est:?}");
    }
}

#[test]
fn estimates_are_reproducible() {
    let p = lower_bound_family(0.1);
    let a = estimate_violation(&[0.8], &p.stages[0], 0, 200_000, 0.05, 9).unwrap();
    let b = estimate_violation(&[0.8], &p.stages[0], 0, 200_000, 0.05, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn survey_exceedance_matches_order_statistics() {
    // x* = max of K uniforms; V(x*) > ε  ⇔  every sample < 1 − ε.
    let p = lower_bound_family(0.1);
    let plan = SampleSizePlan::fixed(&p, &[10], 1e-6);
    let reps = 4000;
    let options = SurveyOptions { method: ViolationMethod::Exact { fallback_n_val: 0 }, discard: None };
    let s = violation_survey(&p, &plan, reps, 8, &options).unwrap();
    let expect = 0.9f64.powi(10);
    let sigma = (expect * (1.0 - expect) / reps as f64).sqrt();
    assert_eq!(s.infeasible, 0);
    assert!((s.exceed_frequency[0] - expect).abs() < 3.0 * sigma, "{}", s.exceed_frequency[0]);
    assert_eq!(s.records.len(), reps as usize);
    assert!(s.to_csv().starts_with("replication,stage,v_hat,exceeds\n"));
}
