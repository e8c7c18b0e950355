use proptest::prelude::*;
use scenario_opt::bounds::*;
use scenario_opt::cuboid_bench::{CuboidInstance, CuboidMode};
use scenario_opt::probkernel::binomial_cdf;

const EPS: [f64; 4] = [0.01, 0.05, 0.10, 0.25];
const N: [u64; 7] = [2, 3, 5, 10, 50, 100, 500];

const MULTI: [[u64; 7]; 4] = [
    [1734, 1777, 1831, 1903, 2072, 2144, 2311],
    [341, 349, 360, 374, 407, 421, 454],
    [166, 170, 176, 182, 199, 205, 221],
    [62, 63, 65, 67, 73, 76, 82],
];
const SINGLE: [[u64; 7]; 4] = [
    [2334, 2722, 3431, 5020, 15588, 27535, 115786],
    [459, 536, 677, 992, 3095, 5477, 23093],
    [225, 263, 332, 488, 1533, 2719, 11506],
    [84, 99, 125, 186, 595, 1063, 4550],
];

#[test]
fn published_sample_size_tables() {
    for (e, &eps) in EPS.iter().enumerate() {
        for (j, &n) in N.iter().enumerate() {
            assert_eq!(implicit_sample_size(2, eps, 1e-6 / n as f64).unwrap(), MULTI[e][j], "multi eps={eps} n={n}");
            assert_eq!(implicit_sample_size(2 * n + 1, eps, 1e-6).unwrap(), SINGLE[e][j], "single eps={eps} n={n}");
        }
    }
}

#[test]
fn implicit_is_minimal() {
    for zeta in [1u64, 2, 3, 7, 20, 50] {
        for eps in EPS {
            for theta in [1e-3, 1e-6, 1e-9] {
                let k = implicit_sample_size(zeta, eps, theta).unwrap();
                assert!(binomial_cdf(zeta as i64 - 1, k, eps).unwrap() <= theta);
                if k > zeta {
                    assert!(binomial_cdf(zeta as i64 - 1, k - 1, eps).unwrap() > theta);
                }
            }
        }
    }
}

#[test]
fn bound_ordering_over_grid() {
    for zeta in 1..=50u64 {
        for eps in EPS {
            for theta in [1e-3, 1e-6, 1e-9] {
                let i = implicit_sample_size(zeta, eps, theta).unwrap();
                let r = refined_sample_size(zeta, eps, theta).unwrap();
                let c = chernoff_sample_size(zeta, eps, theta).unwrap();
                assert!(i <= r && r <= c, "zeta={zeta} eps={eps} theta={theta}: {i} {r} {c}");
            }
        }
    }
}

#[test]
fn discarding_sizes_grow_with_discards() {
    let mut last = 0;
    for r in 0..=20 {
        let k = implicit_sample_size_with_discarding(2, 0.1, 5e-7, r).unwrap();
        assert!(k >= last);
        assert!(explicit_sample_size_with_discarding(2, 0.1, 5e-7, r).unwrap() >= k);
        last = k;
    }
}

#[test]
fn discardable_count_is_consistent() {
    for &(zeta, k, eps, theta) in &[(2u64, 5000u64, 0.1, 1e-6), (1, 2000, 0.05, 1e-3), (5, 20_000, 0.1, 1e-6)] {
        let r = max_discardable(zeta, k, eps, theta).unwrap();
        assert!(r > 0);
        assert!(discard_posterior_confidence(zeta, k, r, eps).unwrap() <= theta);
    }
}

#[test]
fn cuboid_plans_match_tables() {
    let multi = CuboidInstance { n: 2, eps: vec![0.01; 2], theta_total: 1e-6, mode: CuboidMode::MultiStage };
    let plan = plan_multistage(&multi.program(), 1e-6, Policy::Implicit, None, None).unwrap();
    assert_eq!(plan.sizes(), vec![1734, 1734]);
    assert!(plan.stages.iter().all(|s| s.method == Method::Implicit && s.theta == 5e-7));
    let single = CuboidInstance { mode: CuboidMode::SingleStage, ..multi };
    let plan = plan_multistage(&single.program(), 1e-6, Policy::Implicit, None, None).unwrap();
    assert_eq!(plan.sizes(), vec![2334]);
}

#[test]
fn plan_invariants_with_discards() {
    let inst = CuboidInstance { n: 3, eps: vec![0.1, 0.05, 0.25], theta_total: 1e-4, mode: CuboidMode::MultiStage };
    for policy in [Policy::Implicit, Policy::Chernoff, Policy::Refined] {
        let plan = plan_multistage(&inst.program(), 1e-4, policy, Some(&[0, 3, 10]), None).unwrap();
        let total: f64 = plan.stages.iter().map(|s| s.theta).sum();
        assert!(total <= 1e-4 * (1.0 + 1e-15));
        for s in &plan.stages {
            assert!(s.k >= s.zeta_bar + 1);
            assert!(s.r < s.k - s.zeta_bar);
        }
        assert_eq!(plan.stages[0].method == Method::Implicit, policy == Policy::Implicit);
        assert_ne!(plan.stages[1].method, Method::Implicit);
    }
}

proptest! {
    #[test]
    fn posterior_confidence_monotone(zeta in 1u64..6, k in 20u64..600, r in 0u64..10, eps in 0.01f64..0.5) {
        prop_assume!(k >= r + zeta + 1);
        let base = discard_posterior_confidence(zeta, k, r, eps).unwrap();
        let more_k = discard_posterior_confidence(zeta, k + 1, r, eps).unwrap();
        let more_r = discard_posterior_confidence(zeta, k, r + 1, eps).unwrap();
        prop_assert!(more_k <= base * (1.0 + 1e-12) + 1e-300);
        prop_assert!(more_r >= base * (1.0 - 1e-12));
    }
}
